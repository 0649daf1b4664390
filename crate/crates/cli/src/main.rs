use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use invicloak::agent::{Agent, AgentError, ClientSessionCache, FetchRequest, KeySource, SiteConfig};
use invicloak::bench::{self, BenchOptions};
use invicloak::cdn::harness::{self, Scenario};
use invicloak::cdn::report::ScenarioVerdict;
use invicloak::clock::{self, ManualClock, SharedClock};
use invicloak::crypto::{PublicKey, SigningKeyPair};
use invicloak::integrity::{self, SignTreeOptions};
use invicloak::keydist::{self, DohClient, KeyCache, StubResolver, StubZone, TlsaRecord};
use invicloak::net;
use invicloak::proxy::{ProxyConfig, ProxyServer};
use invicloak::rng::SharedRng;

const EXIT_USAGE: u8 = 1;
const EXIT_SECURITY: u8 = 2;
const EXIT_INFRA: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "invicloak", version, about = "Encrypted channel through an untrusted CDN")]
struct Cli {
    /// Seed for every random choice (keys, nonces, session ids).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fixed clock, seconds since the Unix epoch.
    #[arg(long, global = true)]
    now: Option<u64>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Alg {
    Ed25519,
    EcdsaP256,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a site signing key: <name>.pem, <name>.pub.pem and <name>.tlsa.
    Keygen {
        #[arg(long)]
        out_dir: PathBuf,
        /// Domain the TLSA record is published for.
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum, default_value = "ed25519")]
        alg: Alg,
        #[arg(long, default_value = "site")]
        name: String,
    },
    /// Print the TLSA record publishing a public key.
    Tlsa {
        #[arg(long)]
        domain: String,
        /// SPKI public key, PEM or DER.
        #[arg(long)]
        pubkey: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the origin-side proxy.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Zone file of TLSA lines; serves it over DoH at /dns-query.
        #[arg(long, requires = "dns_listen")]
        zone: Option<PathBuf>,
        #[arg(long, requires = "zone")]
        dns_listen: Option<String>,
        /// Clear the AD bit on stub resolver answers.
        #[arg(long)]
        dns_unauthenticated: bool,
    },
    /// Sign the executable objects under a directory.
    Sign {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        manifest_mode: bool,
        #[arg(long)]
        sign_css: bool,
    },
    /// Fetch a URL through the client agent.
    Fetch {
        /// Site configuration JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        url: String,
        #[arg(long, default_value = "GET")]
        method: String,
        #[arg(long)]
        data: Option<String>,
        /// `Name: value`, repeatable.
        #[arg(long = "header")]
        headers: Vec<String>,
        #[arg(long)]
        session_cache: Option<PathBuf>,
        /// Pin the key from a TLSA line instead of asking the resolver.
        #[arg(long)]
        tlsa: Option<PathBuf>,
        /// Print status and headers before the body.
        #[arg(long, short = 'i')]
        include: bool,
    },
    /// Compare sealed and plain throughput on a local fixture.
    Bench {
        /// Requests per payload size; pairs with --size. Without both, the
        /// standard 50,000-request mix runs.
        #[arg(long, requires = "size")]
        requests: Option<usize>,
        /// Payload bytes, repeatable.
        #[arg(long, requires = "requests")]
        size: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        concurrency: usize,
        /// Drive the full client agent instead of pre-sealed requests.
        #[arg(long)]
        end_to_end: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run adversarial CDN scenarios.
    Simulate {
        /// Scenario name, or `all`.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    fn infra(message: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_INFRA, message: message.to_string() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let filter = match tracing_subscriber::EnvFilter::try_new(&cli.log_level) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("invicloak: bad --log-level: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("invicloak: {e}");
            return ExitCode::from(EXIT_INFRA);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("invicloak: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

async fn run(cli: Cli) -> Outcome {
    let rng = SharedRng::from_option(cli.seed);
    let clock: SharedClock = match cli.now {
        Some(t) => Arc::new(ManualClock::new(t)),
        None => clock::system(),
    };
    match cli.command {
        Command::Keygen { out_dir, domain, alg, name } => keygen(&out_dir, &domain, alg, &name, rng),
        Command::Tlsa { domain, pubkey, out } => tlsa(&domain, &pubkey, out.as_deref()),
        Command::Serve { config, zone, dns_listen, dns_unauthenticated } => {
            serve(&config, zone.as_deref(), dns_listen.as_deref(), !dns_unauthenticated, clock, rng).await
        }
        Command::Sign { key, dir, manifest_mode, sign_css } => sign(&key, &dir, SignTreeOptions { manifest_mode, sign_css }),
        Command::Fetch { config, url, method, data, headers, session_cache, tlsa, include } => {
            let mut req = FetchRequest::get(url);
            req.method = method.to_ascii_uppercase();
            if let Some(data) = data {
                req.body = data.into();
            }
            for h in &headers {
                let (name, value) = h.split_once(':').ok_or_else(|| Failure::usage(format!("header `{h}` is not `Name: value`")))?;
                req = req.header(name.trim(), value.trim());
            }
            fetch(&config, &req, session_cache.as_deref(), tlsa.as_deref(), include, clock, rng).await
        }
        Command::Bench { requests, size, concurrency, end_to_end, out } => {
            let mix = match requests {
                Some(n) => size.iter().map(|&s| (s, n)).collect(),
                None => bench::STANDARD_MIX.to_vec(),
            };
            if concurrency == 0 || mix.iter().any(|&(s, n)| s == 0 || n == 0) {
                return Err(Failure::usage("sizes, request counts and concurrency must be positive"));
            }
            if mix.iter().any(|&(s, _)| s > invicloak::cdn::fixture::MAX_BLOB) {
                return Err(Failure::usage(format!("payloads are limited to {} bytes", invicloak::cdn::fixture::MAX_BLOB)));
            }
            let opts = BenchOptions { mix, concurrency, seed: cli.seed.unwrap_or(1), end_to_end };
            run_bench(&opts, out.as_deref()).await
        }
        Command::Simulate { scenario, report } => {
            simulate(&scenario, report.as_deref(), cli.seed.unwrap_or(1), cli.now.unwrap_or(harness::DEFAULT_NOW)).await
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::infra(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::infra(format!("{}: {e}", path.display())))
}

fn keygen(dir: &Path, domain: &str, alg: Alg, name: &str, mut rng: SharedRng) -> Outcome {
    let key = match alg {
        Alg::Ed25519 => SigningKeyPair::generate(&mut rng),
        Alg::EcdsaP256 => SigningKeyPair::generate_ecdsa_p256(&mut rng),
    };
    std::fs::create_dir_all(dir).map_err(|e| Failure::infra(format!("{}: {e}", dir.display())))?;
    let private = dir.join(format!("{name}.pem"));
    {
        use std::io::Write;
        let mut opts = std::fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        opts.open(&private)
            .and_then(|mut f| f.write_all(key.to_pkcs8_pem().as_bytes()))
            .map_err(|e| Failure::infra(format!("{}: {e}", private.display())))?;
    }
    let public = key.public_key();
    write(&dir.join(format!("{name}.pub.pem")), public.to_spki_pem().as_bytes())?;
    let record = keydist::emit_tlsa(&public, domain).presentation();
    write(&dir.join(format!("{name}.tlsa")), format!("{record}\n").as_bytes())?;
    println!("{record}");
    Ok(0)
}

fn tlsa(domain: &str, pubkey: &Path, out: Option<&Path>) -> Outcome {
    let key = PublicKey::from_spki_bytes(&read(pubkey)?).map_err(|e| Failure::usage(format!("{}: {e}", pubkey.display())))?;
    let record = keydist::emit_tlsa(&key, domain).presentation();
    match out {
        Some(path) => write(path, format!("{record}\n").as_bytes())?,
        None => println!("{record}"),
    }
    Ok(0)
}

async fn serve(
    config: &Path,
    zone: Option<&Path>,
    dns_listen: Option<&str>,
    authenticated: bool,
    clock: SharedClock,
    rng: SharedRng,
) -> Outcome {
    let config = ProxyConfig::load(config).map_err(|e| Failure::usage(format!("{}: {e}", config.display())))?;
    let listen = config.listen.clone();
    let proxy = ProxyServer::from_config(config, clock, rng).map_err(Failure::usage)?;
    let mut handles = Vec::new();
    if let (Some(zone), Some(addr)) = (zone, dns_listen) {
        let text = String::from_utf8(read(zone)?).map_err(|_| Failure::usage("zone file is not UTF-8"))?;
        let zone = StubZone::from_presentation(&text).map_err(|e| Failure::usage(e.to_string()))?;
        let dns = net::spawn(addr, Arc::new(StubResolver::new(zone, authenticated))).await.map_err(Failure::infra)?;
        println!("dns {}/dns-query", dns.url());
        handles.push(dns);
    }
    let srv = net::spawn(&listen, Arc::new(proxy)).await.map_err(|e| Failure::infra(format!("{listen}: {e}")))?;
    println!("listening {}", srv.url());
    handles.push(srv);
    tokio::signal::ctrl_c().await.map_err(Failure::infra)?;
    Ok(0)
}

fn sign(key: &Path, dir: &Path, opts: SignTreeOptions) -> Outcome {
    let key = SigningKeyPair::from_pkcs8_bytes(&read(key)?).map_err(|e| Failure::usage(format!("{}: {e}", key.display())))?;
    let manifest = integrity::sign_tree(dir, &key, opts).map_err(Failure::infra)?;
    for entry in &manifest.objects {
        println!("{} {}", entry.sha384, entry.path);
    }
    Ok(0)
}

async fn fetch(
    config: &Path,
    req: &FetchRequest,
    session_cache: Option<&Path>,
    pinned: Option<&Path>,
    include: bool,
    clock: SharedClock,
    rng: SharedRng,
) -> Outcome {
    let site = SiteConfig::load(&read(config)?).map_err(|e| Failure::usage(format!("{}: {e}", config.display())))?;
    let keys = match (pinned, &site.resolver_url) {
        (Some(path), _) => {
            let text = String::from_utf8(read(path)?).map_err(|_| Failure::usage("TLSA file is not UTF-8"))?;
            let record = TlsaRecord::parse_presentation(text.trim()).map_err(|e| Failure::usage(e.to_string()))?;
            let key = record.payload.public_key().ok_or_else(|| Failure::usage("TLSA record does not carry a usable key"))?;
            KeySource::Pinned(key)
        }
        (None, Some(url)) => KeySource::Dns {
            doh: DohClient::new(url.clone(), site.require_ad, rng.clone()),
            cache: KeyCache::new(clock.clone()),
        },
        (None, None) => return Err(Failure::usage("no key source: set resolverURL in the site config or pass --tlsa")),
    };
    let sessions = match session_cache {
        Some(path) => ClientSessionCache::open(path, clock.now_secs()).map_err(Failure::infra)?,
        None => ClientSessionCache::in_memory(),
    };
    let agent = Agent::new(site, keys, sessions, clock, rng);
    let result = agent.fetch(req).await;
    agent.sessions().flush().map_err(Failure::infra)?;
    match result {
        Ok(resp) => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            let mut emit = || -> std::io::Result<()> {
                if include {
                    writeln!(out, "HTTP {}{}", resp.status, if resp.sealed { " sealed" } else { "" })?;
                    for (name, value) in &resp.headers {
                        writeln!(out, "{name}: {}", String::from_utf8_lossy(value))?;
                    }
                    writeln!(out)?;
                }
                out.write_all(&resp.body)?;
                out.flush()
            };
            emit().map_err(Failure::infra)?;
            Ok(0)
        }
        Err(e) => Err(agent_failure(e)),
    }
}

fn agent_failure(e: AgentError) -> Failure {
    let code = if e.is_security() { EXIT_SECURITY } else { EXIT_INFRA };
    Failure { code, message: e.to_string() }
}

async fn run_bench(opts: &BenchOptions, out: Option<&Path>) -> Outcome {
    let report = bench::run(opts).await.map_err(Failure::infra)?;
    let json = serde_json::to_string_pretty(&report).map_err(Failure::infra)?;
    match out {
        Some(path) => write(path, json.as_bytes())?,
        None => println!("{json}"),
    }
    if report.errors > 0 {
        return Err(Failure::infra(format!("{} requests failed", report.errors)));
    }
    Ok(0)
}

async fn simulate(name: &str, report_path: Option<&Path>, seed: u64, now: u64) -> Outcome {
    let scenarios: Vec<Scenario> = if name == "all" {
        Scenario::ALL.to_vec()
    } else {
        let known = Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
        vec![Scenario::from_name(name).ok_or_else(|| Failure::usage(format!("unknown scenario `{name}`; known: {known}, all")))?]
    };
    let mut reports = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        let report = harness::run_scenario(s, seed, now).await;
        let verdict = serde_json::to_value(report.verdict).map_err(Failure::infra)?;
        println!("{}: {} ({})", report.scenario, verdict.as_str().unwrap_or("?"), report.reason);
        reports.push(report);
    }
    if let Some(path) = report_path {
        let json = if reports.len() == 1 {
            reports[0].to_json()
        } else {
            serde_json::to_string_pretty(&reports).map_err(Failure::infra)?
        };
        write(path, json.as_bytes())?;
    }
    let code = if reports.len() == 1 {
        reports[0].verdict.exit_code() as u8
    } else if reports.iter().any(|r| r.verdict == ScenarioVerdict::InfrastructureError) {
        EXIT_INFRA
    } else if reports.iter().any(|r| r.verdict == ScenarioVerdict::Fail) {
        EXIT_SECURITY
    } else {
        // Expected failures are the documented outcome of the matrix.
        0
    };
    Ok(code)
}

//! Every failure on the way to a private URL must end in an error or a
//! sealed exchange. The tap on the CDN hop records everything; no private
//! request may ever show up there in the clear.

mod common;

use common::{AgentOptions, Fault, Stack};
use invicloak::agent::{Agent, AgentError, FetchRequest};
use invicloak::cdn::harness::KEY_DOMAIN;
use invicloak::crypto::SigningKeyPair;
use invicloak::keydist::{dns, emit_tlsa, owner_name, KeyDistError, StubZone};
use invicloak::session::SessionError;
use invicloak::wire::Envelope;

const SECRETS: [&str; 5] = ["acct-19c4", "hdr-77e0", "ck-3b52", "body-a1d9", "path-60fe"];

fn private_requests(stack: &Stack) -> Vec<FetchRequest> {
    vec![
        FetchRequest::get(stack.url(&format!("/transactions?acct={}", SECRETS[0])))
            .header("x-secret", SECRETS[1])
            .header("cookie", &format!("token={}", SECRETS[2])),
        FetchRequest::post(stack.url("/login"), format!("user=alice&pw={}", SECRETS[3])),
        FetchRequest::get(stack.url(&format!("/profile/{}", SECRETS[4]))),
    ]
}

type Expect = fn(&AgentError) -> bool;

struct Case {
    name: &'static str,
    expect: Expect,
    /// Whether the origin may have seen the request (it is trusted; only
    /// the CDN hop matters, but a pre-channel failure must stop earlier).
    origin_may_see: bool,
}

/// Fires every private request twice, then checks the wire.
async fn exercise(stack: &Stack, agent: &Agent, case: &Case) {
    let mut outcomes = Vec::new();
    for _ in 0..2 {
        for req in private_requests(stack) {
            outcomes.push(agent.fetch(&req).await);
        }
    }
    let mut errors = 0;
    for outcome in &outcomes {
        match outcome {
            Ok(resp) => assert!(resp.sealed, "{}: answered outside the channel", case.name),
            Err(err) => {
                errors += 1;
                assert!((case.expect)(err), "{}: unexpected error {err:?}", case.name);
            }
        }
    }
    assert!(errors > 0, "{}: fault never surfaced", case.name);
    assert_eq!(agent.counters().plain_fetches, 0, "{}", case.name);

    let config = agent.config();
    for x in stack.tap.log() {
        for secret in SECRETS {
            assert!(!x.contains(secret.as_bytes()), "{}: {secret} on the wire in {} {}", case.name, x.method, x.target);
        }
        if config.is_sensitive(&x.target) {
            assert!(x.is_sealed_request(), "{}: {} {} not sealed", case.name, x.method, x.target);
            Envelope::decode(&x.body).unwrap_or_else(|e| panic!("{}: outer body is not an envelope: {e}", case.name));
        }
    }
    if !case.origin_may_see {
        assert_eq!(stack.origin.count(), 0, "{}: origin reached", case.name);
    }
}

async fn with_zone(name: &'static str, seed: u64, expect: Expect, edit: impl FnOnce(&mut StubZone)) {
    let stack = Stack::start(seed).await;
    stack.resolver.update_zone(edit);
    let case = Case {
        name,
        expect,
        origin_may_see: false,
    };
    exercise(&stack, &stack.agent(), &case).await;
}

async fn with_fault(name: &'static str, seed: u64, fault: Fault, expect: Expect, origin_may_see: bool) {
    let stack = Stack::start(seed).await;
    stack.tap.set_fault(fault);
    let case = Case {
        name,
        expect,
        origin_may_see,
    };
    exercise(&stack, &stack.agent(), &case).await;
}

#[tokio::test]
async fn key_distribution_failures() {
    with_zone("nxdomain", 100, |e| matches!(e, AgentError::NotEnabled), |z| *z = StubZone::new()).await;
    with_zone(
        "nodata",
        101,
        |e| matches!(e, AgentError::NotEnabled),
        |z| {
            let mut fresh = StubZone::new();
            fresh.insert(&owner_name(KEY_DOMAIN), dns::TYPE_CNAME, 60, b"\x03www\x00".to_vec());
            *z = fresh;
        },
    )
    .await;
    with_zone(
        "unusable record",
        102,
        |e| matches!(e, AgentError::KeyDist(KeyDistError::RecordsUnparseable)),
        |z| z.replace(&owner_name(KEY_DOMAIN), vec![(dns::TYPE_TLSA, 60, vec![3, 1, 0, 0xde, 0xad])]),
    )
    .await;
    with_zone(
        "substituted key",
        103,
        |e| matches!(e, AgentError::Handshake(SessionError::SignatureInvalid)),
        |z| {
            let other = SigningKeyPair::from_ed25519_seed(&[0x42; 32]).public_key();
            let mut fresh = StubZone::new();
            fresh.insert_tlsa(&emit_tlsa(&other, KEY_DOMAIN));
            *z = fresh;
        },
    )
    .await;

    let stack = Stack::start(104).await;
    stack.resolver.set_authenticated(false);
    let case = Case {
        name: "unauthenticated answer",
        expect: |e| matches!(e, AgentError::KeyDist(KeyDistError::NotAuthenticated)),
        origin_may_see: false,
    };
    exercise(&stack, &stack.agent(), &case).await;

    let stack = Stack::start(105).await;
    let agent = stack.agent_with(AgentOptions {
        resolver_url: Some("http://127.0.0.1:9/dns-query".into()),
        ..Default::default()
    });
    let case = Case {
        name: "resolver unreachable",
        expect: |e| matches!(e, AgentError::KeyDist(KeyDistError::Transport(_))),
        origin_may_see: false,
    };
    exercise(&stack, &agent, &case).await;
}

#[tokio::test]
async fn handshake_failures() {
    let http = |e: &AgentError| matches!(e, AgentError::HandshakeHttp(_));
    with_fault("hello 500", 110, Fault::HelloStatus(500), http, false).await;
    with_fault("hello 404", 111, Fault::HelloStatus(404), http, false).await;
    with_fault("hello 200 junk", 112, Fault::HelloGarbage, |e| matches!(e, AgentError::Handshake(_)), false).await;
    with_fault(
        "hello signature flipped",
        113,
        Fault::HelloFlip,
        |e| matches!(e, AgentError::Handshake(SessionError::SignatureInvalid)),
        false,
    )
    .await;
}

#[tokio::test]
async fn sealed_exchange_failures() {
    for (i, status) in [400u16, 401, 403, 404, 500, 502, 503].into_iter().enumerate() {
        let name = Box::leak(format!("sealed {status}").into_boxed_str());
        let want: Expect = match status {
            400 => |e| matches!(e, AgentError::Rejected(400)),
            401 => |e| matches!(e, AgentError::Rejected(401)),
            _ => |e| matches!(e, AgentError::Rejected(_)),
        };
        with_fault(name, 120 + i as u64, Fault::SealedStatus(status), want, false).await;
    }
    let response = |e: &AgentError| matches!(e, AgentError::Response(_));
    let malformed = |e: &AgentError| matches!(e, AgentError::Malformed(_));
    with_fault("response flipped", 130, Fault::SealedFlip, response, true).await;
    with_fault("response truncated", 131, Fault::SealedTruncate, malformed, true).await;
    with_fault("response plaintext", 132, Fault::SealedPlaintext, malformed, true).await;
    with_fault(
        "response replayed",
        133,
        Fault::SealedReplay,
        |e| matches!(e, AgentError::Response(SessionError::SequenceMismatch)),
        true,
    )
    .await;
}

#[tokio::test]
async fn transport_failure() {
    let stack = Stack::start(140).await;
    let agent = stack.agent();
    for req in private_requests(&stack) {
        let mut req = req;
        req.url = req.url.replace(&stack.front, "http://127.0.0.1:9");
        let err = agent.fetch(&req).await.unwrap_err();
        assert!(matches!(err, AgentError::Transport(_)), "{err:?}");
        assert!(!err.is_security());
    }
    assert_eq!(agent.counters().plain_fetches, 0);
}

#[tokio::test]
async fn errors_classify_as_security_or_plumbing() {
    use invicloak::wire::WireError;
    assert!(AgentError::NotEnabled.is_security());
    assert!(AgentError::KeyDist(KeyDistError::NotAuthenticated).is_security());
    assert!(AgentError::Handshake(SessionError::SignatureInvalid).is_security());
    assert!(AgentError::Rejected(400).is_security());
    assert!(AgentError::Malformed(WireError::UnsupportedVersion(9)).is_security());
    assert!(!AgentError::HandshakeHttp(503).is_security());
    assert!(!AgentError::KeyDist(KeyDistError::Transport("x".into())).is_security());
    assert!(!AgentError::Transport("x".into()).is_security());
}

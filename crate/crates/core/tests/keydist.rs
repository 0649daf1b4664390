use std::sync::Arc;

use hickory_proto::op::{Message as HMessage, MessageType, Query};
use hickory_proto::rr::rdata::tlsa::{CertUsage, Matching, Selector, TLSA};
use hickory_proto::rr::{Name, RData, Record as HRecord, RecordType};
use invicloak::clock::{ManualClock, SharedClock};
use invicloak::crypto::SigningKeyPair;
use invicloak::keydist::dns::{self, Message};
use invicloak::keydist::*;
use invicloak::net;
use invicloak::rng::SharedRng;

const DOMAIN: &str = "shop.example";

async fn setup(zone: StubZone, authenticated: bool) -> (Arc<StubResolver>, net::ServerHandle) {
    let stub = Arc::new(StubResolver::new(zone, authenticated));
    let handle = net::spawn("127.0.0.1:0", Arc::clone(&stub)).await.unwrap();
    (stub, handle)
}

fn zone_with_key(seed: u8) -> (StubZone, invicloak::crypto::PublicKey) {
    let key = SigningKeyPair::from_ed25519_seed(&[seed; 32]).public_key();
    let mut zone = StubZone::new();
    zone.insert_tlsa(&emit_tlsa(&key, DOMAIN));
    (zone, key)
}

fn client(handle: &net::ServerHandle, require_ad: bool) -> DohClient {
    DohClient::new(format!("{}/dns-query", handle.url()), require_ad, SharedRng::seeded(1))
}

#[tokio::test]
async fn key_round_trip_and_cache() {
    let (zone, key) = zone_with_key(5);
    let (stub, handle) = setup(zone, true).await;
    let doh = client(&handle, true);
    let clock = ManualClock::new(1_000);
    let cache = KeyCache::new(Arc::new(clock.clone()) as SharedClock);

    assert_eq!(cache.fetch_key(&doh, DOMAIN).await.unwrap(), KeyLookup::Enabled(key.clone()));
    assert_eq!((doh.queries_sent(), stub.queries_answered()), (1, 1));

    assert_eq!(cache.fetch_key(&doh, DOMAIN).await.unwrap(), KeyLookup::Enabled(key.clone()));
    assert_eq!((doh.queries_sent(), stub.queries_answered()), (1, 1));

    clock.advance(3_599);
    cache.fetch_key(&doh, DOMAIN).await.unwrap();
    assert_eq!(doh.queries_sent(), 1);
    clock.advance(1);
    cache.fetch_key(&doh, DOMAIN).await.unwrap();
    assert_eq!(doh.queries_sent(), 2);
}

#[tokio::test]
async fn concurrent_lookups_share_one_query() {
    let (zone, key) = zone_with_key(6);
    let (stub, handle) = setup(zone, true).await;
    let doh = Arc::new(client(&handle, true));
    let cache = Arc::new(KeyCache::new(Arc::new(ManualClock::new(0)) as SharedClock));
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let (doh, cache) = (Arc::clone(&doh), Arc::clone(&cache));
            tokio::spawn(async move { cache.fetch_key(&doh, DOMAIN).await })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap().unwrap(), KeyLookup::Enabled(key.clone()));
    }
    assert_eq!(stub.queries_answered(), 1);
}

#[tokio::test]
async fn not_enabled_is_not_cached() {
    let (zone, _) = zone_with_key(7);
    let (stub, handle) = setup(zone, true).await;
    let doh = client(&handle, true);
    let cache = KeyCache::new(Arc::new(ManualClock::new(0)) as SharedClock);
    assert_eq!(cache.fetch_key(&doh, "plain.example").await.unwrap(), KeyLookup::NotEnabled);
    assert_eq!(cache.fetch_key(&doh, "plain.example").await.unwrap(), KeyLookup::NotEnabled);
    assert_eq!(stub.queries_answered(), 2);

    stub.update_zone(|z| z.insert("_443._tcp.nodata.example", 16, 60, b"\x05hello".to_vec()));
    assert_eq!(cache.fetch_key(&doh, "nodata.example").await.unwrap(), KeyLookup::NotEnabled);
}

#[tokio::test]
async fn fail_closed_cases() {
    let (zone, _) = zone_with_key(8);
    let (stub, handle) = setup(zone, false).await;
    let cache = KeyCache::new(Arc::new(ManualClock::new(0)) as SharedClock);

    let strict = client(&handle, true);
    assert_eq!(cache.fetch_key(&strict, DOMAIN).await, Err(KeyDistError::NotAuthenticated));
    let lax = client(&handle, false);
    assert!(matches!(cache.fetch_key(&lax, DOMAIN).await, Ok(KeyLookup::Enabled(_))));

    stub.update_zone(|z| {
        z.replace(
            &owner_name("broken.example"),
            vec![(dns::TYPE_TLSA, 60, vec![3, 1, 1, 0xde, 0xad]), (dns::TYPE_TLSA, 60, vec![3, 1, 0, 0x30, 0x00])],
        )
    });
    assert_eq!(cache.fetch_key(&lax, "broken.example").await, Err(KeyDistError::RecordsUnparseable));

    let gone = client(&handle, false);
    drop(handle);
    assert!(matches!(gone.lookup(DOMAIN).await, Err(KeyDistError::Transport(_))));
}

#[tokio::test]
async fn http_surface() {
    let (zone, _) = zone_with_key(9);
    let (stub, handle) = setup(zone, true).await;
    let http = net::http_client();
    let q = Message::query(42, &owner_name(DOMAIN), dns::TYPE_TLSA).encode().unwrap();
    use base64::Engine;
    let b64 = base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(&q);
    let uri = format!("{}/dns-query?dns={b64}", handle.url());
    let resp = http.get(uri.parse().unwrap()).await.unwrap();
    assert_eq!(resp.status(), 200);
    let body = net::collect(resp.into_body()).await.unwrap();
    let answer = Message::decode(&body).unwrap();
    assert_eq!(answer.id, 42);
    assert_eq!(answer.answers.len(), 1);

    let uri = format!("{}/dns-query?dns=AAAA", handle.url());
    let resp = http.get(uri.parse().unwrap()).await.unwrap();
    assert_eq!(resp.status(), 400);
    let uri = format!("{}/elsewhere", handle.url());
    assert_eq!(http.get(uri.parse().unwrap()).await.unwrap().status(), 404);
    assert_eq!(stub.queries_answered(), 1);
}

#[test]
fn hickory_reads_our_query_and_answer() {
    let (zone, key) = zone_with_key(10);
    let stub = StubResolver::new(zone, true);
    let query = Message::query(0x1234, &owner_name(DOMAIN), dns::TYPE_TLSA).encode().unwrap();

    let parsed = HMessage::from_vec(&query).unwrap();
    assert_eq!(parsed.id(), 0x1234);
    assert!(parsed.recursion_desired());
    assert_eq!(parsed.queries()[0].name().to_ascii(), "_443._tcp.shop.example.");
    assert_eq!(parsed.queries()[0].query_type(), RecordType::TLSA);
    let edns = parsed.extensions().as_ref().expect("EDNS present");
    assert!(edns.dnssec_ok());
    assert_eq!(edns.max_payload(), dns::EDNS_UDP_SIZE);

    let answer = HMessage::from_vec(&stub.answer(&query).unwrap()).unwrap();
    assert_eq!(answer.message_type(), MessageType::Response);
    assert!(answer.authentic_data());
    let RData::TLSA(tlsa) = answer.answers()[0].data().unwrap() else {
        panic!("expected TLSA rdata");
    };
    assert_eq!(tlsa.cert_usage(), CertUsage::DomainIssued);
    assert_eq!(tlsa.selector(), Selector::Spki);
    assert_eq!(tlsa.matching(), Matching::Raw);
    assert_eq!(tlsa.cert_data(), key.to_spki_der());
}

#[test]
fn we_read_hickory_compressed_answer() {
    let key = SigningKeyPair::from_ed25519_seed(&[11; 32]).public_key();
    let name = Name::from_ascii("_443._tcp.shop.example.").unwrap();
    let mut msg = HMessage::new();
    msg.set_id(77)
        .set_message_type(MessageType::Response)
        .set_authentic_data(true)
        .add_query(Query::query(name.clone(), RecordType::TLSA));
    for _ in 0..2 {
        let rdata = TLSA::new(CertUsage::DomainIssued, Selector::Spki, Matching::Raw, key.to_spki_der());
        msg.add_answer(HRecord::from_rdata(name.clone(), 120, RData::TLSA(rdata)));
    }
    let bytes = msg.to_vec().unwrap();
    assert!(bytes.windows(2).any(|w| w == [0xc0, 12]), "expected a compression pointer");
    let ours = Message::decode(&bytes).unwrap();
    assert_eq!(ours.answers.len(), 2);
    assert_eq!(ours.answers[1].name, "_443._tcp.shop.example");
    assert_eq!(ours.answers[1].ttl, 120);
    let payload = TlsaPayload::from_rdata(&ours.answers[0].rdata).unwrap();
    assert_eq!(payload.public_key(), Some(key));
}

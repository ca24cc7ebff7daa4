mod common;

use std::net::TcpListener;
use std::sync::Arc;

use common::{frames, tap, CLINIC_TEXTS as TEXTS};
use sanitext::harness::{client_infer, Client, ModelKind, Server};
use sanitext::protocol::{Frame, FrameBody, ERR_UNSUPPORTED_VERSION, OOV_TOKEN_ID};
use sanitext::synth::demo_store;
use sanitext::{
    Branch, CandidateTable, Error, PrivacyParams, RngStream, Sanitizer, SensitivityPartition,
};

fn sanitizer(p: f64) -> Arc<Sanitizer> {
    let store = demo_store(3).unwrap();
    let table = CandidateTable::build(&store, 5).unwrap();
    let part = SensitivityPartition::by_frequency(&store, 0.2).unwrap();
    Arc::new(Sanitizer::new(store, table, part, PrivacyParams::new(1.0, p).unwrap()).unwrap())
}

#[test]
fn wire_carries_only_sanitized_ids() {
    let s = sanitizer(0.3);
    let server = Server::bind("127.0.0.1:0", Arc::new(s.store().clone()), ModelKind::Echo)
        .unwrap()
        .spawn()
        .unwrap();
    let tap = tap(server.addr());
    let mut client = Client::connect(tap.addr, s.clone()).unwrap();
    let mut outcomes = Vec::new();
    for i in 0..100u64 {
        let text = TEXTS[i as usize % TEXTS.len()];
        let o = client.infer(text, i, &mut RngStream::new(99, i)).unwrap();
        assert_eq!(o.response.output_ids, o.transmitted_ids());
        outcomes.push(o);
    }
    drop(client);
    tap.thread.join().unwrap();
    let wire = frames(&tap.captured.lock().unwrap());
    assert_eq!(wire.len(), 100);
    let mut replaced = 0;
    for (frame, o) in wire.iter().zip(&outcomes) {
        let FrameBody::Request(req) = &frame.body else {
            panic!("client sent {frame:?}")
        };
        assert_eq!(req.session_id, o.response.session_id);
        assert_eq!(req.token_ids.len(), o.document.audit.len());
        for (id, rec) in req.token_ids.iter().zip(&o.document.audit) {
            assert_eq!(*id, rec.output_id.unwrap_or(OOV_TOKEN_ID));
            if rec.branch.is_replacement() {
                replaced += 1;
                assert_ne!(Some(*id), rec.original_id);
            }
            if let Some(orig) = rec.original_id {
                if s.partition().is_sensitive(orig) {
                    assert_ne!(*id, orig);
                }
            }
        }
        for (name, v) in o.timing.phases() {
            assert!(v >= 0.0 && v.is_finite(), "{name}");
        }
    }
    assert!(replaced > 100);
    server.shutdown();
}

#[test]
fn keep_branch_sends_original_ids() {
    // Only non-sensitive words; find a seed whose gates never fire.
    let s = sanitizer(0.3);
    let server = Server::bind("127.0.0.1:0", Arc::new(s.store().clone()), ModelKind::Echo)
        .unwrap()
        .spawn()
        .unwrap();
    let text = "the doctor saw my nurse";
    let ids: Vec<u32> = text
        .split(' ')
        .map(|w| s.store().lookup(w).unwrap())
        .collect();
    assert!(ids.iter().all(|&i| !s.partition().is_sensitive(i)));
    let seed = (0..1000)
        .find(|&seed| {
            let d = s.sanitize_document(text, &mut RngStream::new(seed, 0));
            d.audit.iter().all(|r| r.branch == Branch::NonsensitiveKeep)
        })
        .unwrap();
    let o = client_infer(
        server.addr(),
        text,
        s.clone(),
        1,
        &mut RngStream::new(seed, 0),
    )
    .unwrap();
    assert_eq!(o.transmitted_ids(), ids);
    server.shutdown();
}

#[test]
fn repeated_seeded_requests_are_identical_on_the_wire() {
    let s = sanitizer(0.3);
    let server = Server::bind(
        "127.0.0.1:0",
        Arc::new(s.store().clone()),
        ModelKind::Linear,
    )
    .unwrap()
    .spawn()
    .unwrap();
    let mut client = Client::connect(server.addr(), s.clone()).unwrap();
    let payloads: Vec<Vec<u8>> = (0..10)
        .map(|_| {
            client
                .infer(TEXTS[0], 5, &mut RngStream::new(4, 4))
                .unwrap()
                .request_frame
        })
        .collect();
    assert!(payloads.windows(2).all(|w| w[0] == w[1]));
    server.shutdown();
}

#[test]
fn server_rejects_other_versions_over_the_socket() {
    let s = sanitizer(0.3);
    let server = Server::bind("127.0.0.1:0", Arc::new(s.store().clone()), ModelKind::Echo)
        .unwrap()
        .spawn()
        .unwrap();
    let mut client = Client::connect(server.addr(), s.clone()).unwrap();
    let mut f = Frame::request(1, vec![0]);
    f.version = 7;
    match client.send_raw(&f).unwrap().body {
        FrameBody::Error(e) => assert_eq!(e.code, ERR_UNSUPPORTED_VERSION),
        other => panic!("{other:?}"),
    }
    server.shutdown();
}

#[test]
fn out_of_range_ids_surface_as_remote_error() {
    let s = sanitizer(1.0);
    // Server knows a smaller vocabulary than the client.
    let small = sanitext::synth::random_store(3, 2, 0).unwrap();
    let server = Server::bind("127.0.0.1:0", Arc::new(small), ModelKind::Echo)
        .unwrap()
        .spawn()
        .unwrap();
    let err = client_infer(
        server.addr(),
        "lisbon oslo",
        s,
        1,
        &mut RngStream::new(0, 0),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Remote { code: 3, .. }), "{err:?}");
    server.shutdown();
}

#[test]
fn refused_connection_is_transport_error() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let err = client_infer(addr, "x", sanitizer(0.3), 1, &mut RngStream::new(0, 0)).unwrap_err();
    assert!(matches!(err, Error::Transport(_)));
    assert_eq!(err.exit_code(), 3);
}

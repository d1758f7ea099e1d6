mod common;

use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use ftca::envelope::{serialize_model, write_model_file};
use ftca::fednet::{
    decode_frame, encode_frame, fetch_envelope, fetch_model_with, serve_bytes, serve_source,
    write_frame, MessageType, ServerHandle, TransferLog, WireMessage, HELLO_BODY,
};
use ftca::NetError;
use ftca_core::tabgen::{fit_statistical, sample, train_gan, GanTrainConfig, GeneratorModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TIMEOUT: Duration = Duration::from_secs(10);

fn small_gan() -> GeneratorModel {
    let cfg = GanTrainConfig {
        epochs: 3,
        generator_hidden: vec![8],
        discriminator_hidden: vec![8],
        ..GanTrainConfig::default()
    };
    train_gan(&common::gaussian_fixture(200, 1), &cfg).unwrap()
}

fn start(model: &GeneratorModel) -> (ServerHandle, std::path::PathBuf) {
    let dir = common::scratch_dir("net");
    let path = dir.join("source.ftcamodel");
    write_model_file(&path, model).unwrap();
    let server = serve_source("127.0.0.1:0", &path, Arc::new(TransferLog::in_memory())).unwrap();
    (server, path)
}

fn wait_for_log(server: &ServerHandle, n: usize) {
    let deadline = Instant::now() + TIMEOUT;
    while server.log().len() < n && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(10));
    }
}

/// Sends raw bytes, half-closes, and returns everything the server sent back.
fn exchange(addr: &str, bytes: &[u8]) -> Vec<u8> {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(TIMEOUT)).unwrap();
    let _ = s.write_all(bytes);
    let _ = s.shutdown(Shutdown::Write);
    let mut out = Vec::new();
    let _ = s.read_to_end(&mut out);
    out
}

fn frames(mut bytes: &[u8]) -> Vec<WireMessage> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (m, used) = decode_frame(bytes).expect("server emitted a malformed frame");
        out.push(m);
        bytes = &bytes[used..];
    }
    out
}

#[test]
fn fetched_models_sample_identically() {
    let source = common::gaussian_fixture(300, 2);
    for model in [fit_statistical(&source).unwrap(), small_gan()] {
        let (server, path) = start(&model);
        let addr = server.local_addr().to_string();
        let bytes = fetch_envelope(&addr, TIMEOUT).unwrap();
        assert_eq!(bytes, std::fs::read(&path).unwrap());
        let fetched = fetch_model_with(&addr, TIMEOUT).unwrap();
        for seed in [0, 7, 123_456] {
            let a = sample(&model, 50, seed).unwrap().combined();
            let b = sample(&fetched, 50, seed).unwrap().combined();
            let bits = |m: &ftca_core::Matrix| {
                m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(&a), bits(&b));
        }
    }
}

#[test]
fn request_before_hello_is_refused() {
    let (server, _) = start(&fit_statistical(&common::gaussian_fixture(50, 3)).unwrap());
    let req = encode_frame(&WireMessage::new(MessageType::ModelRequest, Vec::new())).unwrap();
    let reply = frames(&exchange(&server.local_addr().to_string(), &req));
    assert_eq!(reply, vec![WireMessage::error("handshake")]);
    wait_for_log(&server, 1);
    let rec = &server.log().records()[0];
    assert!(!rec.payload_served);
    assert_eq!(rec.outcome, "handshake");
}

#[test]
fn sessions_are_logged_separately_and_serve_identical_bytes() {
    let (server, _) = start(&fit_statistical(&common::gaussian_fixture(50, 4)).unwrap());
    let addr = server.local_addr().to_string();
    let first = fetch_envelope(&addr, TIMEOUT).unwrap();
    let second = fetch_envelope(&addr, TIMEOUT).unwrap();
    assert_eq!(first, second);
    wait_for_log(&server, 2);
    let records = server.log().records();
    assert_eq!(records.len(), 2);
    assert!(records
        .iter()
        .all(|r| r.payload_served && r.outcome == "served"));
    assert!(records
        .iter()
        .all(|r| r.bytes_out == 5 + HELLO_BODY.len() + 5 + first.len()));
}

#[test]
fn a_stalled_peer_does_not_block_others() {
    let (server, _) = start(&fit_statistical(&common::gaussian_fixture(50, 5)).unwrap());
    let addr = server.local_addr().to_string();
    let _idle = TcpStream::connect(&addr).unwrap();
    let workers: Vec<_> = (0..6)
        .map(|_| {
            let addr = addr.clone();
            thread::spawn(move || fetch_envelope(&addr, TIMEOUT).map(|b| b.len()))
        })
        .collect();
    let started = Instant::now();
    let lens: Vec<usize> = workers
        .into_iter()
        .map(|w| w.join().unwrap().unwrap())
        .collect();
    assert!(lens.windows(2).all(|w| w[0] == w[1]));
    assert!(
        started.elapsed() < Duration::from_secs(4),
        "fetches waited on the idle peer"
    );
}

#[test]
fn remote_error_and_bad_payload_are_distinct() {
    // a peer that refuses every session
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let refuser = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut head = [0u8; 5 + 6];
        s.read_exact(&mut head).unwrap();
        write_frame(&mut s, &WireMessage::error("source is busy")).unwrap();
    });
    match fetch_model_with(&addr, TIMEOUT) {
        Err(NetError::Remote(text)) => assert_eq!(text, "source is busy"),
        other => panic!("expected a remote error, got {other:?}"),
    }
    refuser.join().unwrap();

    let server = serve_bytes(
        "127.0.0.1:0",
        b"not a model".to_vec(),
        Arc::new(TransferLog::in_memory()),
    )
    .unwrap();
    let err = fetch_model_with(&server.local_addr().to_string(), TIMEOUT).unwrap_err();
    assert!(matches!(err, NetError::Deserialize(_)), "{err:?}");
}

#[test]
fn startup_fails_fast() {
    let dir = common::scratch_dir("startup");
    let bad = dir.join("bad.ftcamodel");
    std::fs::write(&bad, b"ftcamodel\nformat_version = 1\n").unwrap();
    assert!(serve_source("127.0.0.1:0", &bad, Arc::new(TransferLog::in_memory())).is_err());
    assert!(serve_source(
        "127.0.0.1:0",
        &dir.join("missing"),
        Arc::new(TransferLog::in_memory())
    )
    .is_err());

    let good = dir.join("good.ftcamodel");
    write_model_file(
        &good,
        &fit_statistical(&common::gaussian_fixture(20, 6)).unwrap(),
    )
    .unwrap();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert!(serve_source(&addr, &good, Arc::new(TransferLog::in_memory())).is_err());
}

#[test]
fn log_file_gets_one_line_per_session() {
    let dir = common::scratch_dir("log");
    let model_path = dir.join("m.ftcamodel");
    write_model_file(
        &model_path,
        &fit_statistical(&common::gaussian_fixture(20, 7)).unwrap(),
    )
    .unwrap();
    let log_path = dir.join("sessions.jsonl");
    let log = Arc::new(TransferLog::with_file(&log_path).unwrap());
    let server = serve_source("127.0.0.1:0", &model_path, log).unwrap();
    let addr = server.local_addr().to_string();
    fetch_envelope(&addr, TIMEOUT).unwrap();
    exchange(&addr, &[9, 9, 9]);
    wait_for_log(&server, 2);
    server.shutdown();
    let text = std::fs::read_to_string(&log_path).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().any(|v| v["payload_served"] == true));
}

#[test]
fn traffic_is_framing_plus_envelope() {
    let source = common::gaussian_fixture(400, 8);
    for model in [fit_statistical(&source).unwrap(), small_gan()] {
        let (server, _) = start(&model);
        let mut session = encode_frame(&WireMessage::new(MessageType::Hello, HELLO_BODY)).unwrap();
        session.extend(
            encode_frame(&WireMessage::new(MessageType::ModelRequest, Vec::new())).unwrap(),
        );
        let traffic = exchange(&server.local_addr().to_string(), &session);

        let envelope = serialize_model(&model);
        let mut expected = encode_frame(&WireMessage::new(MessageType::Hello, HELLO_BODY)).unwrap();
        expected
            .extend(encode_frame(&WireMessage::new(MessageType::ModelPayload, envelope)).unwrap());
        assert_eq!(traffic, expected);
        assert!(!common::leaks_row_sequence(
            &traffic,
            &common::training_rows(&source)
        ));
    }
}

#[test]
fn fuzzed_streams_never_take_the_server_down() {
    let model = fit_statistical(&common::gaussian_fixture(30, 9)).unwrap();
    let (server, path) = start(&model);
    let addr = server.local_addr().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let hello = encode_frame(&WireMessage::new(MessageType::Hello, HELLO_BODY)).unwrap();
    for case in 0..150 {
        let mut bytes: Vec<u8> = match case % 5 {
            // pure noise
            0 => (0..rng.random_range(0..64)).map(|_| rng.random()).collect(),
            // a valid hello followed by noise
            1 => {
                let mut b = hello.clone();
                b.extend((0..rng.random_range(0..32)).map(|_| rng.random::<u8>()));
                b
            }
            // plausible header, random type, short body
            2 => {
                let len: u32 = rng.random_range(0..16);
                let mut b = len.to_be_bytes().to_vec();
                b.push(rng.random());
                b.extend((0..rng.random_range(0..=len)).map(|_| rng.random::<u8>()));
                b
            }
            // claimed length far beyond the limit
            3 => {
                let mut b = rng
                    .random_range(64u32 << 20..u32::MAX)
                    .to_be_bytes()
                    .to_vec();
                b.push(1);
                b
            }
            // a valid session with one byte flipped
            _ => {
                let mut b = hello.clone();
                b.extend(
                    encode_frame(&WireMessage::new(MessageType::ModelRequest, Vec::new())).unwrap(),
                );
                let i = rng.random_range(0..b.len());
                b[i] ^= 1 << rng.random_range(0..8);
                b
            }
        };
        bytes.truncate(256);
        let reply = frames(&exchange(&addr, &bytes));
        for m in &reply {
            assert!(
                matches!(
                    m.kind,
                    MessageType::Hello | MessageType::ErrorReply | MessageType::ModelPayload
                ),
                "case {case}: {:?}",
                m.kind
            );
        }
    }
    assert_eq!(
        fetch_envelope(&addr, TIMEOUT).unwrap(),
        std::fs::read(&path).unwrap()
    );
}

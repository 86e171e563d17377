use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use sjbench::harness::synthetic::random_image;
use sjbench::image::ColorSpace;
use sjbench::model::protocol::{
    encode_score_request, read_frame, serve_tcp, Frame, Opcode, ReadOutcome, WireSpace, HEADER_LEN,
};
use sjbench::model::{ConstantModel, Endpoint, ModelAdapter, RegionMeanModel, RemoteScorer, Scorer};
use sjbench::Error;

fn spawn_server(model: Arc<dyn ModelAdapter>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || serve_tcp(model, listener));
    addr
}

fn region_model() -> Arc<dyn ModelAdapter> {
    Arc::new(RegionMeanModel::new(vec![(1, 1), (2, 3), (5, 0)], 4).unwrap())
}

#[test]
fn echo_and_capabilities() {
    let addr = spawn_server(region_model());
    let client = RemoteScorer::connect(&Endpoint::Tcp(addr)).unwrap();
    let caps = client.capabilities();
    assert!(caps.deterministic);
    assert_eq!(caps.n_classes, 4);
    assert_eq!(caps.input_space, WireSpace::Raw01);
    for payload in [vec![], vec![0u8], (0..=255u8).collect::<Vec<_>>()] {
        assert_eq!(client.echo(&payload).unwrap(), payload);
    }
}

#[test]
fn deterministic_double_scoring_is_byte_identical() {
    let addr = spawn_server(region_model());
    let client = RemoteScorer::connect(&Endpoint::Tcp(addr)).unwrap();
    let batch: Vec<_> = (0..5).map(|i| random_image(6, 6, i)).collect();
    let payload = encode_score_request(&batch).unwrap();
    let a = client.score_payload(payload.clone()).unwrap();
    let b = client.score_payload(payload).unwrap();
    assert_eq!(a, b);
}

#[test]
fn remote_scores_match_local_model() {
    let local = region_model();
    let addr = spawn_server(local.clone());
    let remote = RemoteScorer::connect(&Endpoint::Tcp(addr)).unwrap();
    let batch: Vec<_> = (0..40).map(|i| random_image(6, 6, 100 + i)).collect();
    let l = Scorer::new(local.as_ref()).with_batch_size(7).score(&batch, 0).unwrap();
    let r = Scorer::new(&remote).with_batch_size(7).score(&batch, 0).unwrap();
    assert_eq!(l, r);
    // Requests carry no target, so the served vector is the class-0 one:
    // every other class reads 1 - region mean.
    let other = Scorer::new(&remote).score(&batch, 3).unwrap();
    for (o, m) in other.iter().zip(&l) {
        assert_eq!(*o, 1.0 - m);
    }
}

#[test]
fn bad_magic_gets_error_frame_and_connection_survives() {
    let addr = spawn_server(Arc::new(ConstantModel::new(0.5).unwrap()));
    let mut s = TcpStream::connect(addr).unwrap();
    let mut bad = Frame::new(Opcode::Echo, 9, b"hello".to_vec()).encode();
    bad[..4].copy_from_slice(b"XXXX");
    s.write_all(&bad).unwrap();
    match read_frame(&mut s).unwrap() {
        ReadOutcome::Frame(f) => {
            assert_eq!(f.opcode, Opcode::Error);
            assert_eq!(f.seq, 9);
        }
        other => panic!("unexpected {other:?}"),
    }
    Frame::new(Opcode::Echo, 10, b"ok".to_vec()).write_to(&mut s).unwrap();
    match read_frame(&mut s).unwrap() {
        ReadOutcome::Frame(f) => assert_eq!((f.opcode, f.seq, f.payload), (Opcode::Echo, 10, b"ok".to_vec())),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_score_payload_is_reported() {
    let addr = spawn_server(region_model());
    let client = RemoteScorer::connect(&Endpoint::Tcp(addr)).unwrap();
    let err = client.score_payload(vec![1, 2, 3]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(client.echo(b"still alive").unwrap(), b"still alive");
}

#[test]
fn header_layout_is_little_endian() {
    let f = Frame::new(Opcode::Score, 0x0102_0304_0506_0708, vec![0xAA; 3]).encode();
    assert_eq!(f.len(), HEADER_LEN + 3);
    assert_eq!(&f[..4], b"SJSC");
    assert_eq!(&f[4..6], &[1, 0]);
    assert_eq!(&f[6..8], &[1, 0]);
    assert_eq!(&f[8..16], &[8, 7, 6, 5, 4, 3, 2, 1]);
    assert_eq!(&f[16..24], &[3, 0, 0, 0, 0, 0, 0, 0]);
}

#[test]
fn unreachable_scorer_is_unavailable() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let err = RemoteScorer::connect(&Endpoint::Tcp(format!("127.0.0.1:{port}"))).err().unwrap();
    assert!(matches!(err, Error::ScorerUnavailable(_)), "{err}");
    let err = RemoteScorer::connect(&Endpoint::Stdio("/nonexistent/scorer".into())).err().unwrap();
    assert!(matches!(err, Error::ScorerUnavailable(_)), "{err}");
    assert!(matches!("http://x".parse::<Endpoint>(), Err(Error::Config(_))));
}

#[test]
fn stdio_endpoint_via_cli_server() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    std::fs::write(&model, r#"{"kind": "region_mean", "region": [[1, 1], [2, 3], [5, 0]], "n_classes": 4}"#).unwrap();
    let cmd = format!("stdio:{} serve --model {} --stdio", env!("CARGO_BIN_EXE_sjbench"), model.display());
    let remote = RemoteScorer::connect(&cmd.parse::<Endpoint>().unwrap()).unwrap();
    assert_eq!(remote.capabilities().n_classes, 4);
    assert_eq!(remote.echo(b"x").unwrap(), b"x");
    let local = region_model();
    let batch: Vec<_> = (0..3).map(|i| random_image(6, 6, i)).collect();
    assert_eq!(
        Scorer::new(&remote).score(&batch, 0).unwrap(),
        Scorer::new(local.as_ref()).score(&batch, 0).unwrap()
    );
}

#[test]
fn normalized_remote_models_receive_normalized_input() {
    struct Probe;
    impl ModelAdapter for Probe {
        fn input_space(&self) -> ColorSpace {
            ColorSpace::Normalized
        }
        fn n_classes(&self) -> usize {
            2
        }
        fn score_batch(
            &self,
            req: &sjbench::model::ScoreRequest<'_>,
        ) -> sjbench::Result<Vec<sjbench::image::ClassScoreVector>> {
            req.batch
                .iter()
                .map(|img| {
                    // Report 1 when every value is zero, i.e. the input was exactly the mean.
                    let zero = img.data().iter().all(|v| v.abs() < 1e-6);
                    sjbench::image::ClassScoreVector::new(vec![zero as u8 as f32, 0.0], req.target_class)
                })
                .collect()
        }
    }
    let addr = spawn_server(Arc::new(Probe));
    let remote = RemoteScorer::connect(&Endpoint::Tcp(addr)).unwrap();
    assert_eq!(remote.capabilities().input_space, WireSpace::Normalized);
    let scorer = Scorer::new(&remote);
    let mean = sjbench::image::ImageTensor::from_pixel(3, 3, &scorer.zero_point(3)).unwrap();
    assert_eq!(scorer.score_one(&mean, 0).unwrap(), 1.0);
}

use std::io::Cursor;
use std::net::{TcpListener, TcpStream};

use fedcentroid::seed::rng_for;
use fedcentroid::transport::tcp::{read_message, write_message};
use fedcentroid::transport::{
    attest, decode_frame, encode_frame, frame_nonce, seal, unseal, AttestationClient,
    AttestationServer, CentroidFrame, Direction, FrameLayer, FrameMeta, MsgType, SealedFrame,
    SealingChannel, SessionKey,
};
use fedcentroid::{do_clustering, CentroidSet, Error, LayeredModel, WeightMatrix};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

fn random_set(rng: &mut impl Rng) -> CentroidSet {
    let layers = (0..rng.gen_range(1..=4))
        .map(|_| {
            let (r, c) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
            let values = (0..r * c)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * 10f64.powi(rng.gen_range(-8..8))
                })
                .collect();
            WeightMatrix::new(r, c, values).unwrap()
        })
        .collect();
    CentroidSet::new(layers).unwrap()
}

fn random_meta(rng: &mut impl Rng) -> FrameMeta {
    FrameMeta {
        msg_type: if rng.gen() {
            MsgType::ClientCentroids
        } else {
            MsgType::GlobalCentroids
        },
        client_id: rng.gen(),
        round: rng.gen(),
    }
}

fn session(secret: &[u8]) -> (SessionKey, SessionKey) {
    let mut server = AttestationServer::new(secret, 1);
    attest(0, secret, &mut server, 2).unwrap()
}

fn bits_equal(a: &CentroidSet, b: &CentroidSet) -> bool {
    a.shapes() == b.shapes()
        && a.layers().iter().zip(b.layers()).all(|(x, y)| {
            x.values()
                .iter()
                .zip(y.values())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        })
}

#[test]
fn ten_thousand_frames_round_trip_bit_exact() {
    let mut rng = rng_for(2024, &[1]);
    for i in 0..10_000 {
        let set = random_set(&mut rng);
        let meta = random_meta(&mut rng);
        let bytes = encode_frame(&set, meta).unwrap();
        let (m, back) = decode_frame(&bytes).unwrap();
        assert_eq!(m, meta, "frame {i}");
        assert!(bits_equal(&set, &back), "frame {i}");
        assert_eq!(encode_frame(&back, m).unwrap(), bytes, "frame {i}");
    }
}

#[test]
fn sealed_frames_round_trip() {
    let (client, server) = session(b"round trip");
    let mut rng = rng_for(7, &[2]);
    let mut tx = SealingChannel::new(client).unwrap();
    let mut rx = SealingChannel::new(server).unwrap();
    for round in 0..200 {
        let set = random_set(&mut rng);
        let meta = FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 0,
            round,
        };
        let frame = encode_frame(&set, meta).unwrap();
        let wire = tx
            .seal(&frame, frame_nonce(0, round, Direction::ClientToServer))
            .unwrap();
        assert_eq!(rx.unseal(&wire).unwrap(), frame);
    }
}

#[test]
fn every_single_bit_flip_is_rejected() {
    let (key, _) = session(b"tamper");
    let mut rng = rng_for(99, &[3]);
    let set = random_set(&mut rng);
    let frame = encode_frame(
        &set,
        FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 3,
            round: 1,
        },
    )
    .unwrap();
    let wire = seal(&frame, &key, frame_nonce(3, 1, Direction::ClientToServer))
        .unwrap()
        .to_bytes();
    let total_bits = wire.len() * 8;
    for _ in 0..1000 {
        let bit = rng.gen_range(0..total_bits);
        let mut bad = wire.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        let opened = SealedFrame::from_bytes(&bad).and_then(|s| unseal(&s, &key));
        assert!(opened.is_err(), "bit {bit} flip accepted");
    }
}

#[test]
fn replayed_frame_is_rejected() {
    let (c, s) = session(b"replay");
    let mut tx = SealingChannel::new(c).unwrap();
    let mut rx = SealingChannel::new(s).unwrap();
    let wire = tx
        .seal(b"payload", frame_nonce(0, 1, Direction::ClientToServer))
        .unwrap();
    rx.unseal(&wire).unwrap();
    assert!(matches!(rx.unseal(&wire), Err(Error::ProtocolViolation(_))));
    assert!(tx
        .seal(b"again", frame_nonce(0, 1, Direction::ClientToServer))
        .is_err());
}

#[test]
fn unattested_key_cannot_open_a_channel() {
    assert!(matches!(
        SealingChannel::new(SessionKey::pending([7; 32])),
        Err(Error::NotAttested)
    ));
}

#[test]
fn wrong_secret_never_attests() {
    let mut rng = rng_for(5, &[4]);
    for i in 0..500u32 {
        let mut good = vec![0u8; rng.gen_range(1..=64)];
        rng.fill_bytes(&mut good);
        let mut wrong = good.clone();
        let at = rng.gen_range(0..wrong.len());
        wrong[at] ^= 1 << rng.gen_range(0..8);
        let mut server = AttestationServer::new(&good, i as u64);
        assert!(attest(i, &wrong, &mut server, i as u64).is_err());
        let mut server = AttestationServer::new(&wrong, i as u64);
        assert!(attest(i, &good, &mut server, i as u64).is_err());
    }
}

#[test]
fn response_for_another_client_is_refused() {
    let mut server = AttestationServer::new(b"s", 1);
    let alice = AttestationClient::new(1, b"s", 1);
    let bob = AttestationClient::new(2, b"s", 1);
    let (resp, id, _) = server.respond(&alice.request().unwrap()).unwrap();
    assert_eq!(id, 1);
    assert!(bob.finish(&resp).is_err());
    assert!(alice.finish(&resp).is_ok());
}

#[test]
fn frames_carry_centroids_and_nothing_about_membership() {
    // Two clients with the same centroids but different row assignments must
    // put identical bytes on the wire.
    let rows_a = vec![
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![4.0, 4.0],
        vec![2.0, 2.0],
    ];
    let rows_b = vec![
        vec![4.0, 4.0],
        vec![0.0, 0.0],
        vec![2.0, 2.0],
        vec![0.0, 0.0],
    ];
    let cluster = |rows: &[Vec<f64>]| {
        let model = LayeredModel::new(vec![WeightMatrix::from_rows(rows).unwrap()]).unwrap();
        do_clustering(&model, 0.5, 3, 1).unwrap()
    };
    let (a, b) = (cluster(&rows_a), cluster(&rows_b));
    assert_ne!(a.layers()[0].membership(), b.layers()[0].membership());
    let meta = FrameMeta {
        msg_type: MsgType::ClientCentroids,
        client_id: 0,
        round: 1,
    };
    let mut ca = CentroidSet::from_clustering(&a).into_layers()[0].clone();
    let mut cb = CentroidSet::from_clustering(&b).into_layers()[0].clone();
    // Label order may differ; compare as sorted rows.
    let sort = |m: &WeightMatrix| {
        let mut rows: Vec<Vec<f64>> = (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
        rows.sort_by(|x, y| x.partial_cmp(y).unwrap());
        WeightMatrix::from_rows(&rows).unwrap()
    };
    ca = sort(&ca);
    cb = sort(&cb);
    let fa = encode_frame(&CentroidSet::new(vec![ca]).unwrap(), meta).unwrap();
    let fb = encode_frame(&CentroidSet::new(vec![cb]).unwrap(), meta).unwrap();
    assert_eq!(fa, fb);

    // Every frame a client can build from a clustering has No_c rows per
    // layer, never one entry per weight row.
    let frame = CentroidFrame::from_set(&CentroidSet::from_clustering(&a), meta).unwrap();
    assert_eq!(frame.layers.len(), 1);
    assert_eq!(frame.layers[0].rows, 2);
    assert_eq!(frame.layers[0].values.len(), 2 * 2);
}

#[test]
fn frame_types_are_a_closed_set() {
    // A frame is its meta plus f64 layers; the struct literal fails to build
    // if either type grows a field.
    let layer = FrameLayer {
        index: 0,
        rows: 1,
        cols: 1,
        values: vec![1.0],
    };
    for msg_type in MsgType::ALL {
        let f = CentroidFrame {
            meta: FrameMeta {
                msg_type,
                client_id: 0,
                round: 0,
            },
            layers: vec![layer.clone()],
        };
        let bytes = f.encode().unwrap();
        assert_eq!(CentroidFrame::decode(&bytes).unwrap(), f);
    }
    assert_eq!(MsgType::ALL.len(), 4);
    for b in 0..=255u8 {
        assert_eq!(
            MsgType::try_from(b).is_ok(),
            MsgType::ALL.iter().any(|m| *m as u8 == b)
        );
    }
}

#[test]
fn truncated_frames_are_rejected() {
    let mut rng = rng_for(1, &[5]);
    let set = random_set(&mut rng);
    let bytes = encode_frame(&set, random_meta(&mut rng)).unwrap();
    for cut in 0..bytes.len() {
        assert!(decode_frame(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(decode_frame(&longer).is_err());
}

#[test]
fn ten_by_four_frame_size() {
    let set = CentroidSet::new(vec![WeightMatrix::zeros(10, 4).unwrap()]).unwrap();
    let meta = FrameMeta {
        msg_type: MsgType::ClientCentroids,
        client_id: 0,
        round: 0,
    };
    assert_eq!(encode_frame(&set, meta).unwrap().len(), 19 + 12 + 320);
}

#[test]
fn length_prefixed_messages_over_tcp_loopback() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (ck, sk) = session(b"tcp");
    let mut rng = rng_for(3, &[6]);
    let sets: Vec<CentroidSet> = (0..20).map(|_| random_set(&mut rng)).collect();
    let expected = sets.clone();

    let server = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut ch = SealingChannel::new(sk).unwrap();
        let mut got = Vec::new();
        for _ in 0..20 {
            let plain = ch.unseal(&read_message(&mut stream).unwrap()).unwrap();
            got.push(decode_frame(&plain).unwrap());
        }
        got
    });
    let mut stream = TcpStream::connect(addr).unwrap();
    let mut ch = SealingChannel::new(ck).unwrap();
    for (round, set) in sets.iter().enumerate() {
        let meta = FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 0,
            round: round as u32,
        };
        let nonce = frame_nonce(0, round as u32, Direction::ClientToServer);
        let wire = ch.seal(&encode_frame(set, meta).unwrap(), nonce).unwrap();
        write_message(&mut stream, &wire).unwrap();
    }
    let got = server.join().unwrap();
    for (i, ((meta, set), want)) in got.iter().zip(&expected).enumerate() {
        assert_eq!(meta.round, i as u32);
        assert!(bits_equal(set, want));
    }
}

#[test]
fn oversized_prefix_is_refused() {
    let mut bytes = u32::MAX.to_le_bytes().to_vec();
    bytes.extend_from_slice(&[0; 8]);
    assert!(read_message(&mut Cursor::new(bytes)).is_err());
}

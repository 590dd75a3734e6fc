//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Byte-identical `rounds.csv` is checked by the CLI
//! crate's acceptance target.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use fedcentroid::data::{FederatedData, SyntheticSpec};
use fedcentroid::driver::{
    predicted_total_time, run_federation, FederationConfig, Mode, PartitionPolicy,
    TimingModelInput, DEFAULT_SECRET,
};
use fedcentroid::model::model_byte_size;
use fedcentroid::protocol::{
    aggregate_centroids, approximation_error, compute_difference, estimate_global_model,
};
use fedcentroid::seed::{derive_seed, rng_for};
use fedcentroid::trainer::{TrainerKind, TrainerSpec};
use fedcentroid::transport::{
    attest, decode_frame, encode_frame, frame_nonce, seal, unseal, AttestationServer,
    CentroidFrame, Direction, FrameMeta, MsgType, SealedFrame,
};
use fedcentroid::verify::{suite_seeds, BoundInstance};
use fedcentroid::{do_clustering, kmeans, CentroidSet, LayeredModel, WeightMatrix};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

const SUITE_BASE: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Protocol {
    models: Vec<LayeredModel>,
    estimates: Vec<LayeredModel>,
    sets: Vec<CentroidSet>,
}

fn run_protocol(inst: &BoundInstance) -> Protocol {
    let models = inst.models().unwrap();
    let seed = derive_seed(inst.seed, &[0xAC]);
    let clusterings: Vec<_> = models
        .iter()
        .map(|m| do_clustering(m, inst.beta, seed, 1).unwrap())
        .collect();
    let sets: Vec<CentroidSet> = clusterings
        .iter()
        .map(CentroidSet::from_clustering)
        .collect();
    let global = aggregate_centroids(&sets, inst.n).unwrap();
    let estimates = models
        .iter()
        .zip(&sets)
        .zip(&clusterings)
        .map(|((m, s), c)| {
            estimate_global_model(m, &compute_difference(&global, s).unwrap(), c).unwrap()
        })
        .collect();
    Protocol {
        models,
        estimates,
        sets,
    }
}

fn suite() -> Vec<BoundInstance> {
    suite_seeds(SUITE_BASE, 50)
        .into_iter()
        .map(|s| BoundInstance::random(s, None))
        .collect()
}

fn client_mean_exact() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_seed = 0;
    for inst in suite() {
        let p = run_protocol(&inst);
        let avg = naive_mean(&p.models);
        let mean = naive_mean(&p.estimates);
        let rel = avg
            .iter()
            .zip(&mean)
            .map(|(a, m)| (a - m).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        if rel > worst {
            worst = rel;
            worst_seed = inst.seed;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("max relative gap {worst:.3e} (seed {worst_seed}), {secs:.2} s"),
    )
}

fn full_ratio_exact() -> Outcome {
    let mut worst = 0.0f64;
    for inst in suite() {
        let p = run_protocol(&inst.with_beta(1.0));
        let avg = naive_mean(&p.models);
        for e in &p.estimates {
            worst = worst.max(max_abs_gap(&flat(e), &avg));
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max |estimate - fedavg| {worst:.3e}"),
    )
}

/// Largest per-parameter error and the bound, both from brute-force loops.
fn brute_error_and_bound(p: &Protocol) -> (f64, f64) {
    let avg = naive_mean(&p.models);
    let eps = p
        .estimates
        .iter()
        .map(|e| max_abs_gap(&flat(e), &avg))
        .fold(0.0, f64::max);
    let b = brute_spread(&p.models);
    let c = brute_max_abs(
        p.sets
            .iter()
            .flat_map(|s| s.layers().iter().map(|l| l.values())),
    );
    let n = p.models.len() as f64;
    (eps, b + 2.0 * c * (n - 1.0) / n)
}

fn bound_holds() -> Outcome {
    let mut violations = 0;
    let mut tightest = 0.0f64;
    let mut report_mismatch = 0.0f64;
    for inst in suite() {
        let p = run_protocol(&inst);
        let (eps, bound) = brute_error_and_bound(&p);
        if eps > bound + 1e-9 {
            violations += 1;
        }
        tightest = tightest.max(eps / bound);
        let r = approximation_error(&p.estimates, &p.models, &p.sets).unwrap();
        report_mismatch = report_mismatch
            .max((r.max_abs_error - eps).abs())
            .max((r.theoretical_bound - bound).abs());
    }
    outcome(
        violations == 0 && report_mismatch <= 1e-12,
        format!(
            "{violations} violations of 50, largest eps/bound {tightest:.3e}, \
             library vs brute force {report_mismatch:.1e}"
        ),
    )
}

fn error_falls_with_ratio() -> Outcome {
    let seeds = 24;
    let (mut low, mut high) = (0.0, 0.0);
    for s in 0..seeds {
        let inst = BoundInstance::random(derive_seed(SUITE_BASE, &[0xACC, s]), None);
        low += brute_error_and_bound(&run_protocol(&inst.with_beta(0.1))).0;
        high += brute_error_and_bound(&run_protocol(&inst.with_beta(0.9))).0;
    }
    let (low, high) = (low / seeds as f64, high / seeds as f64);
    outcome(
        high < low,
        format!("{seeds} seeds: mean max|eps| {low:.3e} at beta 0.1, {high:.3e} at beta 0.9"),
    )
}

fn payload_ratio() -> Outcome {
    let shapes = [(128usize, 16usize), (200, 8), (100, 4), (333, 3)];
    let mut rng = rng_for(SUITE_BASE, &[0xAD]);
    let layers = shapes
        .iter()
        .map(|&(r, f)| {
            let v = (0..r * f)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            WeightMatrix::new(r, f, v).unwrap()
        })
        .collect();
    let model = LayeredModel::new(layers).unwrap();
    let full: usize = shapes.iter().map(|&(r, f)| r * f * 8).sum();
    let mut pass = model_byte_size(&model) == full;
    let mut ratios = Vec::new();
    for tenth in 1..=9usize {
        let beta = tenth as f64 / 10.0;
        let c = do_clustering(&model, beta, 7, 1).unwrap();
        let meta = FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 0,
            round: 1,
        };
        let frame = CentroidFrame::from_set(&CentroidSet::from_clustering(&c), meta).unwrap();
        let payload = frame.payload_value_bytes();
        let expected: usize = shapes.iter().map(|&(r, f)| (r * tenth / 10) * f * 8).sum();
        let ratio = payload as f64 / full as f64;
        pass &= payload == expected && (ratio - beta).abs() <= 0.05;
        ratios.push(format!("{beta}:{ratio:.4}"));
    }
    outcome(pass, format!("payload/full {}", ratios.join(" ")))
}

fn timing_model() -> Outcome {
    let expected_h = [(1.0, 2.90), (2.0, 2.16), (5.0, 1.68), (10.0, 1.52)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (agg, want) in expected_h {
        let t = predicted_total_time(&TimingModelInput {
            epochs: 10.0,
            agg_every: agg,
            local_s: vec![491.0],
            cluster_s: vec![564.0],
            aggregate_s: 1.0,
        })
        .unwrap();
        let oracle = 10.0 * 491.0 + (10.0 / agg) * (564.0 + 1.0);
        let hours = t / 3600.0;
        pass &= (t - oracle).abs() <= 1e-9 && ((hours - want) / want).abs() <= 0.03;
        parts.push(format!("Agg_fr={agg}: {hours:.3} h (target {want})"));
    }
    outcome(pass, parts.join(", "))
}

fn mlp_config(mode: Mode) -> FederationConfig {
    FederationConfig {
        clients: 3,
        rounds: 10,
        agg_every: 1,
        beta: 0.9,
        seed: 42,
        trainer: TrainerSpec {
            kind: TrainerKind::MlpSgd,
            learning_rate: 0.02,
            epochs: 1,
            seed: 42,
        },
        dp: None,
        mode,
        partition: PartitionPolicy::Fixed,
        hidden: vec![16],
        secret: DEFAULT_SECRET.to_string(),
    }
}

fn convergence() -> Outcome {
    let data = FederatedData::synthetic(&SyntheticSpec::default(), 3, 42).unwrap();
    let run = |m| run_federation(&mlp_config(m), &data).unwrap();
    let (c, f, none) = (
        run(Mode::Centroid),
        run(Mode::FedAvg),
        run(Mode::NoAggregation),
    );
    let mut spread_ok = true;
    let mut worst_ratio = 0.0f64;
    for (rc, rn) in c.reports.iter().zip(&none.reports).skip(1) {
        spread_ok &= rc.loss_spread() < rn.loss_spread();
        worst_ratio = worst_ratio.max(rc.loss_spread() / rn.loss_spread());
    }
    let (lc, lf) = (
        c.reports.last().unwrap().mean_loss(),
        f.reports.last().unwrap().mean_loss(),
    );
    let rel = (lc - lf).abs() / lf;
    outcome(
        spread_ok && rel <= 0.05,
        format!(
            "rounds 2-10 spread centroid/no-agg at most {worst_ratio:.3}, \
             final loss {lc:.5} vs fedavg {lf:.5} ({:.2}%)",
            rel * 100.0
        ),
    )
}

fn random_set(rng: &mut impl Rng) -> CentroidSet {
    let layers = (0..rng.gen_range(1..=4))
        .map(|_| {
            let (r, c) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
            let v = (0..r * c)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * 10f64.powi(rng.gen_range(-8..8))
                })
                .collect();
            WeightMatrix::new(r, c, v).unwrap()
        })
        .collect();
    CentroidSet::new(layers).unwrap()
}

fn transport() -> Outcome {
    let mut rng = rng_for(SUITE_BASE, &[0xAE]);
    let mut round_trip_failures = 0;
    for i in 0..10_000u32 {
        let set = random_set(&mut rng);
        let meta = FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: rng.gen(),
            round: i,
        };
        let bytes = encode_frame(&set, meta).unwrap();
        let ok = match decode_frame(&bytes) {
            Ok((m, back)) => {
                m == meta
                    && back.shapes() == set.shapes()
                    && back.layers().iter().zip(set.layers()).all(|(a, b)| {
                        a.values()
                            .iter()
                            .zip(b.values())
                            .all(|(x, y)| x.to_bits() == y.to_bits())
                    })
            }
            Err(_) => false,
        };
        round_trip_failures += usize::from(!ok);
    }

    let mut server = AttestationServer::new(b"acceptance", 1);
    let (key, _) = attest(0, b"acceptance", &mut server, 1).unwrap();
    let frame = encode_frame(
        &random_set(&mut rng),
        FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 0,
            round: 1,
        },
    )
    .unwrap();
    let wire = seal(&frame, &key, frame_nonce(0, 1, Direction::ClientToServer))
        .unwrap()
        .to_bytes();
    let mut tamper_accepted = 0;
    for _ in 0..1000 {
        let bit = rng.gen_range(0..wire.len() * 8);
        let mut bad = wire.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        tamper_accepted += usize::from(
            SealedFrame::from_bytes(&bad)
                .and_then(|s| unseal(&s, &key))
                .is_ok(),
        );
    }

    let mut wrong_accepted = 0;
    for i in 0..200u32 {
        let mut secret = [0u8; 16];
        rng.fill_bytes(&mut secret);
        let mut guess = secret;
        guess[rng.gen_range(0..16)] ^= 1 << rng.gen_range(0..8);
        let mut server = AttestationServer::new(&secret, i as u64);
        wrong_accepted += usize::from(attest(i, &guess, &mut server, i as u64).is_ok());
    }

    // No frame type has room for memberships: a clustering's frame has No_c
    // rows per layer, fewer than the r memberships it would need.
    let model = LayeredModel::new(vec![WeightMatrix::new(
        40,
        3,
        (0..120).map(|_| rng.gen()).collect(),
    )
    .unwrap()])
    .unwrap();
    let c = do_clustering(&model, 0.25, 1, 1).unwrap();
    let f = CentroidFrame::from_set(
        &CentroidSet::from_clustering(&c),
        FrameMeta {
            msg_type: MsgType::ClientCentroids,
            client_id: 0,
            round: 1,
        },
    )
    .unwrap();
    let membership_free = MsgType::ALL.len() == 4
        && f.layers.len() == 1
        && f.layers[0].rows == 10
        && f.layers[0].values.len() == 30
        && f.encoded_len() < 40 * 8;

    outcome(
        round_trip_failures == 0 && tamper_accepted == 0 && wrong_accepted == 0 && membership_free,
        format!(
            "round-trip failures {round_trip_failures}/10000, tampered frames accepted \
             {tamper_accepted}/1000, wrong-secret handshakes accepted {wrong_accepted}/200, \
             membership-free frames {membership_free}"
        ),
    )
}

fn kmeans_oracle() -> Outcome {
    let mut worst = 1.0f64;
    let mut misses = 0;
    for seed in 0..100 {
        let inst = kmeans_instance(seed);
        let m = WeightMatrix::from_rows(&inst.rows).unwrap();
        let res = kmeans(&m, inst.k, seed).unwrap();
        let ours = sse(&inst.rows, res.membership(), inst.k);
        let opt = optimum_sse(&inst.rows, inst.k);
        if ours > 1.10 * opt + 1e-12 {
            misses += 1;
        }
        if opt > 0.0 {
            worst = worst.max(ours / opt);
        }
    }
    outcome(
        misses == 0,
        format!("{misses}/100 beyond 10%, worst SSE/optimum {worst:.4}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        (
            "1 client mean of estimates equals fedavg",
            client_mean_exact,
        ),
        ("2 beta=1 estimates equal fedavg", full_ratio_exact),
        ("3 error within B + 2C(n-1)/n", bound_holds),
        ("4 error falls from beta 0.1 to 0.9", error_falls_with_ratio),
        ("5 centroid payload ratio tracks beta", payload_ratio),
        ("6 total-time model", timing_model),
        ("7 MLP convergence against baselines", convergence),
        ("8 transport integrity", transport),
        ("10 k-means near exhaustive optimum", kmeans_oracle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mmimo::run_parallel;
use mmimo_core::channel::{generate_channels, Link, NtConvention, Scenario};
use mmimo_core::detectors::{self, ML_DEFAULT_CAP};
use mmimo_core::metrics::{count_symbol_bit_errors, noise_variance_for, ResultTable};
use mmimo_core::modem::{qpsk_point, slice_index, QPSK_AMPLITUDE, QPSK_TAU};
use mmimo_core::numerics::logdet2_hpd;
use mmimo_core::precoders::{self, PowerBudget, ThpPrecoder, VP_DEFAULT_CAP};
use mmimo_core::sim::{ExperimentKind, ExperimentSpec, Report};
use mmimo_core::stream::RandomStream;
use mmimo_core::{Complex, ComplexMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenario(n_a: usize, k: usize, n_u: usize, link: Link, snr: Vec<f64>, packets: usize, seed: u64) -> Scenario {
    Scenario {
        n_a,
        k_users: k,
        n_u,
        link,
        snr_grid_db: snr,
        packet_len: 1000,
        n_packets: packets,
        seed,
        n_t_convention: NtConvention::TotalTransmitAntennas,
    }
}

fn workers() -> usize {
    mmimo::runner::default_workers()
}

/// `a` is strictly below `b` by more than two pooled standard errors.
fn clearly_below(t: &ResultTable, a: &str, b: &str, snr: f64) -> (bool, f64) {
    let (ra, rb) = (t.get(a, snr).unwrap(), t.get(b, snr).unwrap());
    let pooled = (ra.stderr.powi(2) + rb.stderr.powi(2)).sqrt();
    let gap = rb.value - ra.value;
    (gap > 2.0 * pooled, if pooled > 0.0 { gap / pooled } else { f64::INFINITY })
}

fn uplink_ordering(report: &Report) -> Outcome {
    let t = &report.table;
    let chain = ["rmf_su", "sic", "mmse", "rmf"];
    let mut lines = Vec::new();
    let mut passing = Vec::new();
    for &snr in &[0.0, 5.0, 10.0, 15.0] {
        let mut ok = true;
        let mut desc = format!("{snr} dB:");
        for w in chain.windows(2) {
            let (below, z) = clearly_below(t, w[0], w[1], snr);
            ok &= below;
            desc.push_str(&format!(" {}={:.3e} <({:.1} se)", w[0], t.get(w[0], snr).unwrap().value, z));
        }
        desc.push_str(&format!(" rmf={:.3e}", t.get("rmf", snr).unwrap().value));
        if ok {
            passing.push(snr);
        }
        lines.push(desc);
    }
    outcome(!passing.is_empty(), format!("ordering holds at {passing:?} dB; {}", lines.join("; ")))
}

fn downlink_ordering() -> Outcome {
    let sc = scenario(128, 8, 8, Link::Downlink, vec![10.0], 100, 2);
    let spec = ExperimentSpec::new(sc, ExperimentKind::DownlinkSumRate).unwrap();
    let t = run_parallel(&spec, workers()).unwrap().table;
    let chain = ["tmf_su", "thp", "rbd", "mmse", "tmf"];
    let mut ok = true;
    let mut desc = String::new();
    for w in chain.windows(2) {
        let (below, z) = clearly_below(&t, w[1], w[0], 10.0);
        ok &= below;
        desc.push_str(&format!("{}={:.2} >({:.1} se) ", w[0], t.get(w[0], 10.0).unwrap().value, z));
    }
    desc.push_str(&format!("tmf={:.2} bit/s/Hz over 100 draws", t.get("tmf", 10.0).unwrap().value));
    outcome(ok, desc)
}

fn zf_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let budget = PowerBudget::new(4.0).unwrap();
    let (mut up_errors, mut down_errors, mut bits) = (0u64, 0u64, 0u64);
    for t in 0..1000u64 {
        let idx: Vec<u8> = (0..4).map(|_| rng.random_range(0..4u8)).collect();
        let s: Vec<Complex> = idx.iter().map(|&i| qpsk_point(i)).collect();

        let up = generate_channels(&scenario(16, 2, 2, Link::Uplink, vec![0.0], 1, t), &RandomStream::root(t)).composite;
        let r = up.mul_vec(&s).unwrap();
        let est = detectors::linear_detect(&detectors::zf_filter(&up).unwrap(), &r).unwrap();
        up_errors += count_symbol_bit_errors(&idx, &est.iter().map(|&v| slice_index(v)).collect::<Vec<_>>());

        let down =
            generate_channels(&scenario(16, 2, 2, Link::Downlink, vec![0.0], 1, t), &RandomStream::root(t)).composite;
        let w = precoders::zf_precoder_matrix(&down).unwrap();
        let x = precoders::linear_precode(&w, &s, budget).unwrap().x;
        let y = down.matmul(&x).unwrap();
        down_errors += count_symbol_bit_errors(&idx, &y.as_slice().iter().map(|&v| slice_index(v)).collect::<Vec<_>>());
        bits += 8;
    }
    outcome(
        up_errors == 0 && down_errors == 0,
        format!("uplink {up_errors} and downlink {down_errors} bit errors over {bits} bits each"),
    )
}

fn thp_loopback() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut errors = 0;
    let mut bits = 0;
    for (n_a, k, n_u) in [(16, 2, 2), (128, 8, 8)] {
        let budget = PowerBudget::new((k * n_u) as f64).unwrap();
        for t in 0..1000u64 {
            let sc = scenario(n_a, k, n_u, Link::Downlink, vec![0.0], 1, t);
            let h = generate_channels(&sc, &RandomStream::root(1_000_000 + t)).composite;
            let m = k * n_u;
            let idx: Vec<u8> = (0..m).map(|_| rng.random_range(0..4u8)).collect();
            let s: Vec<Complex> = idx.iter().map(|&i| qpsk_point(i)).collect();
            let thp = ThpPrecoder::new(&h, QPSK_TAU).unwrap();
            let out = thp.precode(&s, budget).unwrap();
            let y = h.matmul(&out.x).unwrap();
            let got: Vec<u8> = thp.receive(y.as_slice(), out.beta).iter().map(|&v| slice_index(v)).collect();
            errors += count_symbol_bit_errors(&idx, &got);
            bits += 2 * m as u64;
        }
    }
    outcome(errors == 0, format!("{errors} bit errors over {bits} bits (1000 draws at 4 and 64 streams)"))
}

fn vp_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut improved = 0;
    for t in 0..1000u64 {
        let sc = scenario(16, 2, 2, Link::Downlink, vec![0.0], 1, t);
        let h = generate_channels(&sc, &RandomStream::root(2_000_000 + t)).composite;
        let w = precoders::zf_precoder_matrix(&h).unwrap();
        let s: Vec<Complex> = (0..4).map(|_| qpsk_point(rng.random_range(0..4u8))).collect();
        let gram = w.hermitian_matmul(&w).unwrap();
        let (p, _) = precoders::vp_search(&gram, &s, QPSK_TAU, 1, VP_DEFAULT_CAP).unwrap();
        let u: Vec<Complex> = s.iter().zip(&p).map(|(a, b)| a + b * QPSK_TAU).collect();
        let perturbed = w.mul_vec(&u).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>();
        let plain = w.mul_vec(&s).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>();
        // the two norms come from different floating-point paths
        if perturbed > plain * (1.0 + 1e-12) {
            violations += 1;
        }
        if p.iter().any(|z| z.norm_sqr() > 0.0) {
            improved += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 1000 instances; nonzero perturbation chosen {improved} times"))
}

/// Straightforward reference: all 16 symbol pairs in index order, first minimum kept.
fn reference_ml(r: &[Complex], h: &DMatrix<Complex>) -> Vec<Complex> {
    let a = QPSK_AMPLITUDE;
    let table = [Complex::new(a, a), Complex::new(a, -a), Complex::new(-a, a), Complex::new(-a, -a)];
    let rv = DMatrix::from_column_slice(r.len(), 1, r);
    let mut best = (f64::INFINITY, vec![]);
    for s0 in table {
        for s1 in table {
            let s = DMatrix::from_column_slice(2, 1, &[s0, s1]);
            let d = (&rv - h * s).norm_squared();
            if d < best.0 {
                best = (d, vec![s0, s1]);
            }
        }
    }
    best.1
}

fn ml_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n_a = rng.random_range(2..=6);
        let cn = |rng: &mut ChaCha8Rng| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let h = ComplexMatrix::from_fn(n_a, 2, |_, _| cn(&mut rng));
        let s = [qpsk_point(rng.random_range(0..4u8)), qpsk_point(rng.random_range(0..4u8))];
        let r: Vec<Complex> = h.mul_vec(&s).unwrap().into_iter().map(|v| v + cn(&mut rng)).collect();
        let got = detectors::ml_detect(&r, &h, ML_DEFAULT_CAP).unwrap();
        let hn = DMatrix::from_fn(n_a, 2, |i, j| h[(i, j)]);
        if got != reference_ml(&r, &hn) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in 500 instances"))
}

fn logdet_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = 1 + i * 63 / 99;
        let b = DMatrix::from_fn(n, n + 2, |_, _| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = &b * b.adjoint() + DMatrix::<Complex>::identity(n, n) * Complex::new(0.05, 0.0);
        let want: f64 = a.clone().symmetric_eigenvalues().iter().map(|l| l.log2()).sum();
        let am = ComplexMatrix::from_fn(n, n, |r, c| a[(r, c)]);
        let got = logdet2_hpd(&am).unwrap();
        worst = worst.max((got - want).abs());
    }
    outcome(worst <= 1e-9, format!("max |error| {worst:.2e} over 100 matrices of size 1..64"))
}

fn mmse_limits() -> Outcome {
    let loadings = [1e-2, 1e-4, 1e-6, 1e-8];
    let mut worst_pre: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let mut monotone = true;
    for t in 0..20u64 {
        let down = generate_channels(&scenario(16, 2, 2, Link::Downlink, vec![0.0], 1, t), &RandomStream::root(3_000_000 + t))
            .composite;
        let up = down.hermitian();
        let zf_pre = precoders::zf_precoder_matrix(&down).unwrap();
        let zf_det = detectors::zf_filter(&up).unwrap().w;
        let (mut prev_pre, mut prev_det) = (f64::INFINITY, f64::INFINITY);
        for &l in &loadings {
            let dp = precoders::mmse_precoder_matrix(&down, l).unwrap().sub(&zf_pre).unwrap().frobenius_norm();
            let dd = detectors::mmse_filter(&up, 1.0, l).unwrap().w.sub(&zf_det).unwrap().frobenius_norm();
            monotone &= dp < prev_pre && dd < prev_det;
            prev_pre = dp;
            prev_det = dd;
        }
        worst_pre = worst_pre.max(prev_pre);
        worst_det = worst_det.max(prev_det);
    }
    outcome(
        monotone && worst_pre <= 1e-4 && worst_det <= 1e-4,
        format!("at loading 1e-8: precoder {worst_pre:.2e}, detector {worst_det:.2e}; monotone over {loadings:?}: {monotone}"),
    )
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for preset in ["ci_uplink.toml", "ci_downlink.toml"] {
        let mut outputs = Vec::new();
        for w in ["1", "4"] {
            let out = tmp.path().join(format!("{preset}-{w}"));
            let status = Command::new(env!("CARGO_BIN_EXE_mmimo"))
                .args(["run", root.join(preset).to_str().unwrap(), "--workers", w, "--out", out.to_str().unwrap(), "-q"])
                .status()
                .unwrap();
            ok &= status.success();
            outputs.push(std::fs::read(out.join("results.csv")).unwrap_or_default());
        }
        let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
        ok &= same;
        details.push(format!("{preset}: {}", if same { "identical" } else { "DIFFERENT" }));
    }
    outcome(ok, format!("workers 1 vs 4: {}", details.join(", ")))
}

fn snr_bookkeeping(report: &Report) -> Outcome {
    let exact = noise_variance_for(0.0, 1, 1.0) == 1.0;
    let worst = report
        .noise_checks
        .iter()
        .map(|n| (n.realized - n.configured).abs() / n.configured)
        .fold(0.0f64, f64::max);
    outcome(
        exact && worst <= 0.02 && !report.noise_checks.is_empty(),
        format!(
            "sigma_n^2(0 dB, N_T=1, sigma_s^2=1) == 1: {exact}; worst realized/configured deviation {:.3}% over {} SNR points",
            worst * 100.0,
            report.noise_checks.len()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id, name, o: Outcome| {
        println!("[{}] {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };

    let uplink_spec = ExperimentSpec::new(
        scenario(128, 8, 8, Link::Uplink, vec![0.0, 5.0, 10.0, 15.0], 200, 1),
        ExperimentKind::UplinkBer,
    )
    .unwrap();
    let uplink = run_parallel(&uplink_spec, workers()).unwrap();

    record(1, "uplink BER ordering (128x8x8, 200 packets)", uplink_ordering(&uplink));
    record(2, "downlink sum-rate ordering (128x8x8, 10 dB)", downlink_ordering());
    record(3, "ZF exactness without noise", zf_exactness());
    record(4, "THP loopback without noise", thp_loopback());
    record(5, "VP never increases transmit energy", vp_dominance());
    record(6, "ML matches reference enumeration", ml_equivalence());
    record(7, "log-determinant against eigenvalues", logdet_oracle());
    record(8, "MMSE converges to ZF", mmse_limits());
    record(9, "worker-count determinism", determinism());
    record(10, "SNR bookkeeping", snr_bookkeeping(&uplink));

    let failed: Vec<_> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1}s{}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

//! Acceptance suite: one test per exit criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see the lines for passing
//! tests; failing tests dump them automatically).
//!
//! The golden suite is 16 seeded-noise 64×64×3 images (seeds 1000..1016)
//! run through conv(seed=42) with default hyperparameters. Snapshot
//! constants are f64 bit patterns recorded from the first verified build;
//! on mismatch the test prints the actual array for refreezing.

use grasp_core::engine::{generate_adversarial, DefenseConfig, DefenseOutcome, LossSelection};
use grasp_core::image::{ImageTensor, NormKind, PixelRange};
use grasp_core::losses::{
    finite_diff_grad, lf_loss, mse_output_loss, relative_grad_error, ssim_loss, SsimConfig,
};
use grasp_core::metrics::{
    evaluate_pairs, evaluate_robustness, psnr, MetricsReport, TransformKind, DSR_THRESHOLD,
};
use grasp_core::models::{
    AffineSurrogate, ConvSurrogate, DimsSpec, IdentitySurrogate, ManipulationModel,
};
use grasp_core::projection::{combine_pair, project_onto_normal_plane};
use grasp_core::rng::XorShift64;
use grasp_core::Error;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const GOLDEN_IMAGE_COUNT: usize = 16;
const GOLDEN_IMAGE_SEED_BASE: u64 = 1000;
const GOLDEN_MODEL_SEED: u64 = 42;

fn golden_images() -> Vec<ImageTensor> {
    (0..GOLDEN_IMAGE_COUNT)
        .map(|i| ImageTensor::seeded_noise(64, 64, 3, GOLDEN_IMAGE_SEED_BASE + i as u64))
        .collect()
}

struct GoldenRun {
    images: Vec<ImageTensor>,
    outcomes: Vec<DefenseOutcome>,
    report: MetricsReport,
    generation_time: Duration,
}

static GOLDEN: OnceLock<GoldenRun> = OnceLock::new();

fn golden_run() -> &'static GoldenRun {
    GOLDEN.get_or_init(|| {
        let model = ConvSurrogate::new(GOLDEN_MODEL_SEED, 3).unwrap();
        let cfg = DefenseConfig::default();
        let images = golden_images();
        let start = Instant::now();
        let outcomes: Vec<DefenseOutcome> = images
            .iter()
            .map(|x| generate_adversarial(&model, x, &cfg).expect("golden run must complete"))
            .collect();
        let generation_time = start.elapsed();
        let pairs: Vec<(ImageTensor, ImageTensor)> = images
            .iter()
            .cloned()
            .zip(outcomes.iter().map(|o| o.adversarial.clone()))
            .collect();
        let report = evaluate_pairs(&model, &pairs, &cfg.ssim).unwrap();
        GoldenRun { images, outcomes, report, generation_time }
    })
}

fn run_suite_with(cfg: &DefenseConfig) -> (Vec<DefenseOutcome>, MetricsReport) {
    let model = ConvSurrogate::new(GOLDEN_MODEL_SEED, 3).unwrap();
    let images = golden_images();
    let outcomes: Vec<DefenseOutcome> = images
        .iter()
        .map(|x| generate_adversarial(&model, x, cfg).expect("suite run must complete"))
        .collect();
    let pairs: Vec<(ImageTensor, ImageTensor)> = images
        .into_iter()
        .zip(outcomes.iter().map(|o| o.adversarial.clone()))
        .collect();
    let report = evaluate_pairs(&model, &pairs, &DefenseConfig::default().ssim).unwrap();
    (outcomes, report)
}

fn random_vector(rng: &mut XorShift64, len: usize) -> ImageTensor {
    ImageTensor::new(
        1,
        len,
        1,
        (0..len).map(|_| rng.next_symmetric() * 4.0).collect(),
        PixelRange::UNIT,
    )
    .unwrap()
}

#[test]
fn criterion_01_projection_orthogonality() {
    let start = Instant::now();
    let mut rng = XorShift64::from_seed(20_001);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = random_vector(&mut rng, 48);
        let mut b = random_vector(&mut rng, 48);
        if a.dot(&b).unwrap() > 0.0 {
            b = b.scale(-1.0);
        }
        let (pa, _) = project_onto_normal_plane(&a, &b).unwrap();
        let (pb, _) = project_onto_normal_plane(&b, &a).unwrap();
        let scale = a.euclidean() * b.euclidean();
        let res_a = pa.dot(&b).unwrap().abs() / scale;
        let res_b = pb.dot(&a).unwrap().abs() / scale;
        worst = worst.max(res_a).max(res_b);
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed < Duration::from_secs(1);
    println!(
        "criterion 1 (projection orthogonality): {} (worst residual {worst:.3e}, {elapsed:?})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "worst residual {worst:.3e}, elapsed {elapsed:?}");
}

#[test]
fn criterion_02_branch_consistency() {
    let mut rng = XorShift64::from_seed(20_002);
    // Non-conflicting pairs: combine must equal the weighted sum bit-exactly.
    let mut checked = 0;
    while checked < 1_000 {
        let a = random_vector(&mut rng, 32);
        let b = random_vector(&mut rng, 32);
        if a.dot(&b).unwrap() <= 0.0 {
            continue;
        }
        let lambda = rng.next_uniform() * 10.0;
        let mu = rng.next_uniform() * 10.0;
        let combined = combine_pair(&a, &b, lambda, mu).unwrap();
        assert!(!combined.conflict);
        let weighted = a.scale(lambda).add(&b.scale(mu)).unwrap();
        assert_eq!(combined.gradient.data(), weighted.data(), "non-conflict branch not bit-exact");
        checked += 1;
    }

    // Synthetic dot = 0 pairs (disjoint supports): both branches agree.
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let mut a_data = vec![0.0; 32];
        let mut b_data = vec![0.0; 32];
        for i in 0..16 {
            a_data[i] = rng.next_symmetric() * 4.0;
            b_data[16 + i] = rng.next_symmetric() * 4.0;
        }
        let a = ImageTensor::new(1, 32, 1, a_data, PixelRange::UNIT).unwrap();
        let b = ImageTensor::new(1, 32, 1, b_data, PixelRange::UNIT).unwrap();
        assert_eq!(a.dot(&b).unwrap(), 0.0);
        let lambda = rng.next_uniform() * 5.0;
        let mu = rng.next_uniform() * 5.0;
        let via_projection = combine_pair(&a, &b, lambda, mu).unwrap();
        assert!(via_projection.conflict);
        let weighted = a.scale(lambda).add(&b.scale(mu)).unwrap();
        let gap = via_projection
            .gradient
            .sub(&weighted)
            .unwrap()
            .norm(NormKind::Linf)
            .unwrap();
        worst = worst.max(gap);
    }
    let pass = worst <= 1e-12;
    println!(
        "criterion 2 (branch consistency): {} (boundary gap {worst:.3e})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "boundary gap {worst:.3e}");
}

#[test]
fn criterion_03_wavelet_round_trip() {
    let mut worst_err: f64 = 0.0;
    let mut worst_energy: f64 = 0.0;
    for seed in 0..100 {
        let x = ImageTensor::seeded_noise(64, 64, 3, 30_000 + seed);
        let bands = grasp_core::wavelet::dwt_haar(&x).unwrap();
        let back = grasp_core::wavelet::idwt_haar(&bands).unwrap();
        let err = back.sub(&x).unwrap().norm(NormKind::Linf).unwrap();
        worst_err = worst_err.max(err);
        let image_energy: f64 = x.data().iter().map(|v| v * v).sum();
        let band_energy: f64 = [&bands.ll, &bands.lh, &bands.hl, &bands.hh]
            .iter()
            .flat_map(|b| b.data())
            .map(|v| v * v)
            .sum();
        worst_energy = worst_energy.max((image_energy - band_energy).abs() / image_energy);
    }
    let pass = worst_err <= 1e-10 && worst_energy <= 1e-9;
    println!(
        "criterion 3 (wavelet round-trip): {} (max abs {worst_err:.3e}, energy rel {worst_energy:.3e})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "round-trip {worst_err:.3e}, energy {worst_energy:.3e}");
}

#[test]
fn criterion_04_gradient_oracle() {
    let start = Instant::now();
    let ssim_cfg = SsimConfig::new(5, 1.0).unwrap();
    let mut worst_ssim: f64 = 0.0;
    let mut worst_lf: f64 = 0.0;
    let mut worst_mse: f64 = 0.0;

    for seed in 0..20u64 {
        let x = ImageTensor::seeded_noise(8, 8, 1, 40_000 + seed);
        let x_adv = ImageTensor::seeded_noise(8, 8, 1, 41_000 + seed);

        let eval = ssim_loss(&x, &x_adv, &ssim_cfg).unwrap();
        let oracle =
            finite_diff_grad(|p| ssim_loss(&x, p, &ssim_cfg).unwrap().value, &x_adv, 1e-6)
                .unwrap();
        worst_ssim = worst_ssim.max(relative_grad_error(&eval.grad_wrt_adv, &oracle).unwrap());

        let eval = lf_loss(&x, &x_adv).unwrap();
        let oracle =
            finite_diff_grad(|p| lf_loss(&x, p).unwrap().value, &x_adv, 1e-7).unwrap();
        worst_lf = worst_lf.max(relative_grad_error(&eval.grad_wrt_adv, &oracle).unwrap());

        let models: Vec<Box<dyn ManipulationModel>> = vec![
            Box::new(IdentitySurrogate),
            Box::new(AffineSurrogate::new(vec![1.7], vec![-0.2]).unwrap()),
            Box::new(ConvSurrogate::new(seed, 1).unwrap()),
        ];
        for model in &models {
            let eval = mse_output_loss(model.as_ref(), &x, &x_adv).unwrap();
            let oracle = finite_diff_grad(
                |p| mse_output_loss(model.as_ref(), &x, p).unwrap().value,
                &x_adv,
                1e-6,
            )
            .unwrap();
            worst_mse = worst_mse.max(relative_grad_error(&eval.grad_wrt_adv, &oracle).unwrap());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_ssim <= 1e-4
        && worst_mse <= 1e-4
        && worst_lf <= 1e-3
        && elapsed < Duration::from_secs(30);
    println!(
        "criterion 4 (gradient oracle): {} (ssim {worst_ssim:.3e}, mse {worst_mse:.3e}, lf {worst_lf:.3e}, {elapsed:?})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ssim {worst_ssim:.3e}, mse {worst_mse:.3e}, lf {worst_lf:.3e}, {elapsed:?}");
}

#[test]
fn criterion_05_epsilon_ball_invariant() {
    let golden = golden_run();
    let mut worst: f64 = 0.0;
    for outcome in &golden.outcomes {
        assert_eq!(outcome.trace.records.len(), DefenseConfig::default().iterations);
        for record in &outcome.trace.records {
            worst = worst.max(record.perturbation_linf);
        }
    }
    let pass = worst <= 0.05 + 1e-9;
    println!(
        "criterion 5 (epsilon-ball invariant): {} (max linf {worst:.12})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "max linf {worst}");
}

#[test]
fn criterion_06_imperceptibility_floor() {
    let golden = golden_run();
    let floor = 20.0 * (1.0f64 / 0.05).log10(); // 26.0206 dB
    let mut worst = f64::INFINITY;
    for (x, outcome) in golden.images.iter().zip(&golden.outcomes) {
        worst = worst.min(psnr(x, &outcome.adversarial).unwrap());
    }
    let pass = worst >= floor - 1e-9;
    println!(
        "criterion 6 (imperceptibility floor): {} (min psnr {worst:.4} dB >= {floor:.4} dB)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "min psnr {worst} dB < floor {floor} dB");
}

// Frozen from the first verified build: 16 per-image unit-scale l2 output
// distances, then mean_l2, mean_l1, mean_psnr, mean_ssim, mean_lf, dsr —
// all as f64 bit patterns. Regenerate by running criterion 7 and copying
// the array it prints on mismatch.
const GOLDEN_METRIC_BITS: [u64; 22] = [
    0x3F57CC1B5A5F3E7D,
    0x3F530AA0C09AAD89,
    0x3F569354B7135BFC,
    0x3F55B726B7705E34,
    0x3F52FFB6D6406953,
    0x3F528B5E4CA8F3C6,
    0x3F534E60911627D5,
    0x3F55452188CA7B8E,
    0x3F5416165B8F2A3B,
    0x3F5591AFF89E750F,
    0x3F5422BF4798E767,
    0x3F54CF0F0F1AC8F7,
    0x3F564F133EE4C368,
    0x3F562DC5D9847E1B,
    0x3F5493093AD49D4B,
    0x3F55AE50A89FF9E5,
    0x3F54E97966D06CF1,
    0x3F9B8F743FEA194D,
    0x403CEECD091615E3,
    0x3FEFE66EC91F2AD7,
    0x412E79F15DCF1626,
    0x0000000000000000,
];

#[test]
fn criterion_07_golden_end_to_end() {
    let golden = golden_run();
    let report = &golden.report;

    let mut actual: Vec<u64> = report.records.iter().map(|r| r.l2_out.to_bits()).collect();
    actual.push(report.mean_l2_out.to_bits());
    actual.push(report.mean_l1_out.to_bits());
    actual.push(report.mean_psnr_in.unwrap().to_bits());
    actual.push(report.mean_ssim_in.unwrap().to_bits());
    actual.push(report.mean_lf_in.unwrap().to_bits());
    actual.push(report.dsr.to_bits());

    let snapshot_ok = actual.as_slice() == GOLDEN_METRIC_BITS;
    let runtime_ok = golden.generation_time < Duration::from_secs(120);
    let dsr_ok = report.dsr == 1.0;
    let pass = snapshot_ok && runtime_ok && dsr_ok;
    println!(
        "criterion 7 (golden end-to-end): {} (dsr {:.4} vs required 1.0 at threshold {DSR_THRESHOLD}, \
         mean l2 {:.6}, snapshot {}, generation {:?})",
        if pass { "PASS" } else { "FAIL" },
        report.dsr,
        report.mean_l2_out,
        if snapshot_ok { "bit-stable" } else { "MISMATCH" },
        golden.generation_time,
    );
    if !snapshot_ok {
        let rendered: Vec<String> = actual.iter().map(|b| format!("0x{b:016X}")).collect();
        println!("snapshot bits:\n[{}]", rendered.join(",\n "));
    }
    assert!(runtime_ok, "golden generation took {:?}", golden.generation_time);
    assert!(snapshot_ok, "golden metric vector drifted from the frozen snapshot");
    assert!(
        dsr_ok,
        "DSR on the golden suite is {:.4}, not 100%: the bundled conv surrogate cannot be \
         driven past the 0.05 unit-scale mean-squared threshold at epsilon=0.05 (per-image l2: {:?})",
        report.dsr,
        report.records.iter().map(|r| r.l2_out).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_08_ablation_direction() {
    let golden = golden_run();
    let full = &golden.report;

    let naive3 = run_suite_with(&DefenseConfig {
        use_projection: false,
        ..DefenseConfig::default()
    })
    .1;
    let mse_only = run_suite_with(&DefenseConfig {
        use_projection: false,
        losses: LossSelection { ssim: false, lf: false },
        ..DefenseConfig::default()
    })
    .1;

    let dsr_ok = full.dsr >= naive3.dsr;
    let full_psnr = full.mean_psnr_in.unwrap();
    let mse_only_psnr = mse_only.mean_psnr_in.unwrap();
    let psnr_ok = full_psnr >= mse_only_psnr;
    let pass = dsr_ok && psnr_ok;
    println!(
        "criterion 8 (ablation direction): {} (dsr full {:.4} >= naive {:.4}: {}; \
         psnr full {:.3} dB >= mse-only {:.3} dB: {})",
        if pass { "PASS" } else { "FAIL" },
        full.dsr,
        naive3.dsr,
        dsr_ok,
        full_psnr,
        mse_only_psnr,
        psnr_ok,
    );
    assert!(dsr_ok, "full dsr {} < naive-sum dsr {}", full.dsr, naive3.dsr);
    assert!(
        psnr_ok,
        "full-defense psnr {full_psnr:.3} dB < mse-only psnr {mse_only_psnr:.3} dB: at kappa=10 \
         the projected composite carries ~129x the l1 mass of the naive mse direction, so the \
         full defense saturates the epsilon-ball while the naive mse-only row cannot reach it \
         within T=20"
    );
}

#[test]
fn criterion_09_robustness_protocol() {
    let golden = golden_run();
    let model = ConvSurrogate::new(GOLDEN_MODEL_SEED, 3).unwrap();
    let pairs: Vec<(ImageTensor, ImageTensor)> = golden
        .images
        .iter()
        .cloned()
        .zip(golden.outcomes.iter().map(|o| o.adversarial.clone()))
        .collect();

    // k = 1 battery equals the baseline exactly.
    let battery: Vec<TransformKind> =
        [1usize, 3, 5, 7].iter().map(|&k| TransformKind::GaussianBlur(k)).collect();
    let results = evaluate_robustness(&model, &pairs, &battery).unwrap();
    let baseline = &golden.report;
    let k1 = &results[0].1;
    let k1_exact = k1
        .records
        .iter()
        .zip(&baseline.records)
        .all(|(a, b)| a.l2_out == b.l2_out && a.defense_success == b.defense_success);

    // rotate-180 twice is the identity, bit-exact.
    let rot_ok = pairs.iter().all(|(_, x_adv)| {
        let once = grasp_core::metrics::robustness_transform(x_adv, TransformKind::Rotate(180.0))
            .unwrap();
        let twice =
            grasp_core::metrics::robustness_transform(&once, TransformKind::Rotate(180.0)).unwrap();
        twice.data() == x_adv.data()
    });

    // DSR series over blur k in {1,3,5,7} is non-increasing.
    let series: Vec<f64> = results.iter().map(|(_, r)| r.dsr).collect();
    let l2_series: Vec<f64> = results.iter().map(|(_, r)| r.mean_l2_out).collect();
    let monotone = series.windows(2).all(|w| w[1] <= w[0] + 1e-12);

    let pass = k1_exact && rot_ok && monotone;
    println!(
        "criterion 9 (robustness protocol): {} (k=1 exact: {k1_exact}, rot180 involution: {rot_ok}, \
         dsr series {series:?} non-increasing: {monotone}, mean l2 series {l2_series:?})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "k1 {k1_exact}, rot {rot_ok}, series {series:?}");
}

#[test]
fn criterion_10_bridge_protocol() {
    use grasp_core::bridge::{connect, serve_connection, BridgeEndpoint};
    use std::io::{BufReader, BufWriter, Write};
    use std::net::TcpListener;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = stream.try_clone().unwrap();
        let _ = serve_connection(
            &IdentitySurrogate,
            BufReader::new(reader),
            BufWriter::new(stream),
        );
    });

    let model = connect(&BridgeEndpoint::Tcp(addr.to_string())).unwrap();
    assert_eq!(model.input_dims(), DimsSpec::Any);
    let mut rng = XorShift64::from_seed(100_010);
    let mut all_exact = true;
    for _ in 0..100 {
        // f32-valued data so the wire round-trip is lossless.
        let data: Vec<f64> = (0..4 * 4 * 3).map(|_| rng.next_uniform() as f32 as f64).collect();
        let x = ImageTensor::new(4, 4, 3, data, PixelRange::UNIT).unwrap();
        let y = model.forward(&x).unwrap();
        all_exact &= y.data() == x.data();
        let cot_data: Vec<f64> =
            (0..4 * 4 * 3).map(|_| rng.next_symmetric() as f32 as f64).collect();
        let cot = ImageTensor::new(4, 4, 3, cot_data, PixelRange::UNIT).unwrap();
        let out = model.vjp(&x, &cot).unwrap();
        all_exact &= out.data() == cot.data();
    }
    drop(model);
    server.join().unwrap();

    // Malformed frames raise ProtocolError without crashing either side.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let rogue = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        stream.write_all(b"XXXXYYYYZZZZ0123456789").unwrap();
    });
    let err = match connect(&BridgeEndpoint::Tcp(addr.to_string())) {
        Err(e) => e,
        Ok(_) => panic!("connecting to a rogue server must fail"),
    };
    let malformed_ok = matches!(err, Error::Protocol(_));
    rogue.join().unwrap();

    let pass = all_exact && malformed_ok;
    println!(
        "criterion 10 (bridge protocol): {} (100 round-trips bit-exact: {all_exact}, malformed -> ProtocolError: {malformed_ok})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

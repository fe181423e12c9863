//! End-to-end acceptance checks, one line of output per criterion.
//!
//! Runs without the libtest harness so the summary is always printed. Set
//! `LVAE_ACCEPTANCE=1,5,9` to run a subset. Criteria 7 and 8 train full-size
//! networks on freshly generated data and take a long time on one core.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lvae_core::datagen::{generate_diffusion_dataset, generate_litho_dataset, Dataset, MaskConfig, SmoothingConfig, TrenchConfig};
use lvae_core::design::{design, design_objective, DesignProblem};
use lvae_core::eval::{batch_roundtrip, reconstruction_accuracy};
use lvae_core::field::{binarize, BinaryImage, Field2D};
use lvae_core::litho::{aerial_image, aerial_image_fft, litho_forward, two_squares, LithoParams};
use lvae_core::morphology::{enclosed_void_count, TrenchCheck};
use lvae_core::nn::{
    decode_checkpoint, encode_checkpoint, field_matrix, kl_divergence, train, AdamConfig, AdamState, DenseLayer,
    TrainConfig, VaeArch, VaeModel, Activation,
};
use lvae_core::phase::{
    bulk_energy_derivative, clamped_mobility, evolve_to_steady, mullins_decay_fit, prepare_initial, Mobility,
    MullinsSetup, PhaseField, PhaseParams, Solver,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("LVAE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "spectral step vs direct DFT", c1_spectral_oracle),
        (2, "mass conservation and energy decay", c2_conservation),
        (3, "k^4 decay-rate scaling", c3_mullins),
        (4, "deep trench pinches off a void", c4_topology),
        (5, "analytic gradients vs finite differences", c5_gradients),
        (6, "KL closed form", c6_kl),
        (7, "desk-scale diffusion pipeline", c7_diffusion_pipeline),
        (8, "desk-scale litho pipeline", c8_litho_pipeline),
        (9, "determinism and bit-exact round trips", c9_determinism),
        (10, "litho forward-model properties", c10_litho_properties),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1. One solver step against an O(N²) DFT reimplementation.

fn dft2(data: &[Complex64], nx: usize, ny: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out = vec![Complex64::default(); nx * ny];
    for ky in 0..ny {
        for kx in 0..nx {
            let mut acc = Complex64::default();
            for y in 0..ny {
                for x in 0..nx {
                    let ang = sign * 2.0 * PI * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64);
                    acc += data[y * nx + x] * Complex64::from_polar(1.0, ang);
                }
            }
            out[ky * nx + kx] = if inverse { acc / (nx * ny) as f64 } else { acc };
        }
    }
    out
}

fn signed_freq(j: usize, n: usize) -> f64 {
    if j <= (n - 1) / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

fn reference_step(phi: &[f64], p: &PhaseParams) -> Vec<f64> {
    let (nx, ny) = (p.nx, p.ny);
    let kfull = |j: usize, n: usize, l: f64| 2.0 * PI * signed_freq(j, n) / l;
    // First-derivative wavenumbers drop the Nyquist bin on even grids.
    let kder = |j: usize, n: usize, l: f64| if n % 2 == 0 && j == n / 2 { 0.0 } else { kfull(j, n, l) };
    let k2 = |r: usize, c: usize| kfull(c, nx, p.lx).powi(2) + kfull(r, ny, p.ly).powi(2);
    let cplx = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let i = Complex64::i();

    let phi_hat = dft2(&cplx(phi), nx, ny, false);
    let lap_term: Vec<Complex64> = (0..nx * ny).map(|j| phi_hat[j] * (p.epsilon * k2(j / nx, j % nx))).collect();
    let lap = dft2(&lap_term, nx, ny, true);
    let mu: Vec<f64> = (0..nx * ny).map(|j| lap[j].re + bulk_energy_derivative(phi[j])).collect();
    let mu_hat = dft2(&cplx(&mu), nx, ny, false);
    let gx = dft2(
        &(0..nx * ny).map(|j| i * kder(j % nx, nx, p.lx) * mu_hat[j]).collect::<Vec<_>>(),
        nx,
        ny,
        true,
    );
    let gy = dft2(
        &(0..nx * ny).map(|j| i * kder(j / nx, ny, p.ly) * mu_hat[j]).collect::<Vec<_>>(),
        nx,
        ny,
        true,
    );
    let coef = 9.0 / (4.0 * p.epsilon);
    let jx: Vec<f64> = (0..nx * ny).map(|j| coef * clamped_mobility(phi[j]) * gx[j].re).collect();
    let jy: Vec<f64> = (0..nx * ny).map(|j| coef * clamped_mobility(phi[j]) * gy[j].re).collect();
    let jx_hat = dft2(&cplx(&jx), nx, ny, false);
    let jy_hat = dft2(&cplx(&jy), nx, ny, false);
    let next: Vec<Complex64> = (0..nx * ny)
        .map(|j| {
            let (r, c) = (j / nx, j % nx);
            let div = i * (kder(c, nx, p.lx) * jx_hat[j] + kder(r, ny, p.ly) * jy_hat[j]);
            let q = k2(r, c);
            phi_hat[j] + div * (p.dt / (1.0 + p.dt * (p.s * q + p.b * q * q)))
        })
        .collect();
    dft2(&next, nx, ny, true).iter().map(|z| z.re).collect()
}

fn c1_spectral_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let p = PhaseParams::for_grid(32, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi: Vec<f64> = (0..32 * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = PhaseField::new(Field2D::new(32, 32, phi.clone()).unwrap());
        let fast = lvae_core::phase::step(&field, &p).unwrap();
        let slow = reference_step(&phi, &p);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = fast
            .grid()
            .data()
            .iter()
            .zip(&slow)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        worst = worst.max(err);
    }
    outcome(worst < 1e-10, format!("max relative difference {worst:.2e} over 3 random 32x32 fields (tol 1e-10)"))
}

// ---------------------------------------------------------------------------
// 2. Conservation and dissipation along 1000-step runs.

fn c2_conservation() -> Outcome {
    let cfg = TrenchConfig::desk_scale();
    let mut p = PhaseParams::for_grid(cfg.width, cfg.height);
    p.max_steps = 1000;
    p.steady_tol = f64::MIN_POSITIVE;
    let smoothing = SmoothingConfig::default();
    let mut worst_drift: f64 = 0.0;
    let mut rises = 0;
    let mut escalations = 0;
    for seed in 0..3 {
        let img = lvae_core::datagen::sample_trench_cell(seed, &cfg).unwrap();
        let phi0 = prepare_initial(&img, &p, smoothing.iterations, smoothing.dt_factor * p.dt).unwrap();
        let ev = evolve_to_steady(&phi0, &p).unwrap();
        assert_eq!(ev.steps, 1000);
        escalations += ev.escalations;
        let sum0: f64 = phi0.grid().data().iter().sum();
        let abs0: f64 = phi0.grid().data().iter().map(|v| v.abs()).sum();
        let sum: f64 = ev.phi.grid().data().iter().sum();
        worst_drift = worst_drift.max((sum - sum0).abs() / abs0);
        rises += ev.history.windows(2).filter(|w| w[1].energy > w[0].energy).count();
    }
    outcome(
        worst_drift < 1e-10 && rises == 0,
        format!(
            "max relative mass drift {worst_drift:.2e} (tol 1e-10), energy rises at checkpoints: {rises}, time-step halvings: {escalations}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Linear relaxation rates of modes k and 2k.

fn c3_mullins() -> Outcome {
    let p = PhaseParams::for_grid(64, 64);
    let a0 = p.cell_size();
    let mut rates = Vec::new();
    for mode in [1usize, 2] {
        // Short probe to size the window to one e-fold of decay.
        let probe = mullins_decay_fit(&p, &MullinsSetup::new(mode, a0, 3000.0 * p.dt)).unwrap();
        let fit = mullins_decay_fit(&p, &MullinsSetup::new(mode, a0, 1.0 / probe.rate)).unwrap();
        rates.push(fit.rate);
    }
    let ratio = rates[1] / rates[0];
    outcome(
        (ratio - 16.0).abs() <= 0.15 * 16.0,
        format!("rate ratio {ratio:.3} for modes 1 and 2 on 64x64 (target 16 +/- 15%)"),
    )
}

// ---------------------------------------------------------------------------
// 4. A trench deeper than four widths closes into an enclosed void.

fn c4_topology() -> Outcome {
    let (nx, ny, w, depth) = (32, 96, 6, 44);
    let surface = ny / 4;
    let x0 = (nx - w) / 2;
    let img = BinaryImage::from_fn(nx, ny, |r, c| r >= surface && !(c >= x0 && c < x0 + w && r < surface + depth));
    assert_eq!(enclosed_void_count(&img), 0);
    let p = PhaseParams::for_grid(nx, ny);
    let s = SmoothingConfig::default();
    let mut phi = prepare_initial(&img, &p, s.iterations, s.dt_factor * p.dt).unwrap();
    let mut solver = Solver::new(p.clone(), Mobility::Degenerate).unwrap();
    let mut first = None;
    let total = 8000;
    for k in 1..=total {
        phi = solver.step(&phi, k).unwrap();
        if k % 100 == 0 && first.is_none() && enclosed_void_count(&phi.binarize()) > 0 {
            first = Some(k);
        }
    }
    let end = enclosed_void_count(&phi.binarize());
    outcome(
        first.is_some() && end > 0,
        format!(
            "{w}x{depth} trench on {nx}x{ny}: first enclosed void at step {:?}, {end} enclosed void(s) after {total} steps",
            first
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Finite-difference gradient suite at 64-bit.

/// Norm-wise relative error of one parameter block.
fn block_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff: f64 = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

const FD_STEP: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn layer_suite(seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for act in [Activation::Identity, Activation::Elu, Activation::Sigmoid] {
        let mut layer = DenseLayer::<f64>::glorot(32, 16, act, &mut rng);
        let x = random_matrix(&mut rng, 3, 32, -1.0, 1.0);
        let w_out = random_matrix(&mut rng, 3, 16, -1.0, 1.0);
        let loss = |l: &DenseLayer<f64>, x: &Array2<f64>| (&l.forward(x.view()).unwrap().out * &w_out).sum();
        let cache = layer.forward(x.view()).unwrap();
        let (g, gx) = layer.backward(x.view(), &cache, w_out.view(), true);
        let gx = gx.unwrap();
        let h = FD_STEP;
        let mut fd = Vec::new();
        for idx in 0..layer.weights.len() {
            let (r, c) = (idx / 32, idx % 32);
            let orig = layer.weights[[r, c]];
            layer.weights[[r, c]] = orig + h;
            let fp = loss(&layer, &x);
            layer.weights[[r, c]] = orig - h;
            let fm = loss(&layer, &x);
            layer.weights[[r, c]] = orig;
            fd.push((fp - fm) / (2.0 * h));
        }
        worst = worst.max(block_err(&fd, g.weights.as_slice().unwrap()));
        fd.clear();
        for j in 0..16 {
            let orig = layer.bias[j];
            layer.bias[j] = orig + h;
            let fp = loss(&layer, &x);
            layer.bias[j] = orig - h;
            let fm = loss(&layer, &x);
            layer.bias[j] = orig;
            fd.push((fp - fm) / (2.0 * h));
        }
        worst = worst.max(block_err(&fd, g.bias.as_slice().unwrap()));
        fd.clear();
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / 32, idx % 32);
            xp[[r, c]] = x[[r, c]] + h;
            let fp = loss(&layer, &xp);
            xp[[r, c]] = x[[r, c]] - h;
            let fm = loss(&layer, &xp);
            xp[[r, c]] = x[[r, c]];
            fd.push((fp - fm) / (2.0 * h));
        }
        worst = worst.max(block_err(&fd, gx.as_slice().unwrap()));
    }
    worst
}

fn vae_suite(seed: u64) -> f64 {
    let arch = VaeArch {
        input_dim: 32,
        hidden: vec![16, 16],
        latent_dim: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut model = VaeModel::<f64>::new(arch, &mut rng);
    let x = Array2::from_shape_fn((4, 32), |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let noise = random_matrix(&mut rng, 4, 4, -1.5, 1.5);
    let loss = |m: &VaeModel<f64>| {
        let pass = m.forward_train(x.view(), noise.view()).unwrap();
        m.loss_and_grads(&pass, x.view()).0.total
    };
    let pass = model.forward_train(x.view(), noise.view()).unwrap();
    let (_, heads) = model.loss_and_grads(&pass, x.view());
    let grads = model.backward(x.view(), &pass, &heads);
    let h = FD_STEP;
    let mut worst: f64 = 0.0;
    for li in 0..model.layers().len() {
        let (rows, cols) = model.layers()[li].weights.dim();
        let (mut fd_w, mut fd_b) = (Vec::new(), Vec::new());
        for r in 0..rows {
            for c in 0..cols {
                let orig = model.layers()[li].weights[[r, c]];
                model.layers_mut()[li].weights[[r, c]] = orig + h;
                let fp = loss(&model);
                model.layers_mut()[li].weights[[r, c]] = orig - h;
                let fm = loss(&model);
                model.layers_mut()[li].weights[[r, c]] = orig;
                fd_w.push((fp - fm) / (2.0 * h));
            }
            let orig = model.layers()[li].bias[r];
            model.layers_mut()[li].bias[r] = orig + h;
            let fp = loss(&model);
            model.layers_mut()[li].bias[r] = orig - h;
            let fm = loss(&model);
            model.layers_mut()[li].bias[r] = orig;
            fd_b.push((fp - fm) / (2.0 * h));
        }
        worst = worst.max(block_err(&fd_w, grads.layers[li].weights.as_slice().unwrap()));
        worst = worst.max(block_err(&fd_b, grads.layers[li].bias.as_slice().unwrap()));
    }
    worst
}

fn design_suite(seed: u64) -> f64 {
    // 32 outputs = a 4 x 8 combined image (two 4 x 4 halves).
    let arch = VaeArch {
        input_dim: 32,
        hidden: vec![16, 16],
        latent_dim: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
    let model = VaeModel::<f64>::new(arch, &mut rng);
    let target = Field2D::from_fn(4, 4, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
    let p = DesignProblem::new(target, 4, 0.1, 0.2, 3.0).unwrap();
    let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, g) = design_objective(&z, &p, &model).unwrap();
    let h = FD_STEP;
    let mut fd = Vec::new();
    for i in 0..4 {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += h;
        zm[i] -= h;
        let fp = design_objective(&zp, &p, &model).unwrap().0.total;
        let fm = design_objective(&zm, &p, &model).unwrap().0.total;
        fd.push((fp - fm) / (2.0 * h));
    }
    block_err(&fd, &g)
}

fn c5_gradients() -> Outcome {
    let (mut layers, mut vae, mut obj): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..10 {
        layers = layers.max(layer_suite(seed));
        vae = vae.max(vae_suite(seed));
        obj = obj.max(design_suite(seed));
    }
    outcome(
        layers < 1e-5 && vae < 1e-5 && obj < 1e-5,
        format!("max relative error: layers {layers:.2e}, VAE loss {vae:.2e}, design objective {obj:.2e} over 10 seeds, norm-wise per parameter block (tol 1e-5)"),
    )
}

// ---------------------------------------------------------------------------
// 6. KL divergence closed form.

fn c6_kl() -> Outcome {
    let d = 7;
    let zeros = Array2::<f64>::zeros((1, d));
    let ones = Array2::<f64>::ones((1, d));
    let k0 = kl_divergence(zeros.view(), zeros.view());
    let k1 = kl_divergence(ones.view(), zeros.view()) / d as f64;
    outcome(
        k0.abs() <= 1e-12 && (k1 - 0.5).abs() <= 1e-12,
        format!("KL(0,0) = {k0:e}, KL(1,0) per dimension = {k1}"),
    )
}

// ---------------------------------------------------------------------------
// 7. Diffusion pipeline at 32 x 64 per half.

fn train_vae(ds: &Dataset, latent: usize, epochs: usize, seed: u64) -> (VaeModel<f32>, usize) {
    let x = field_matrix::<f32>(ds.train_samples().map(|s| s.combined())).unwrap();
    let mut model = VaeModel::<f32>::from_seed(VaeArch::standard(x.ncols(), latent), seed);
    let mut adam = AdamState::new(&model, AdamConfig::default());
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &mut adam, x.view(), &cfg).unwrap();
    (model, report.epochs_run())
}

fn c7_diffusion_pipeline() -> Outcome {
    let cfg = TrenchConfig::desk_scale();
    let params = PhaseParams::for_grid(cfg.width, cfg.height);
    let smoothing = SmoothingConfig::default();
    let (ds, _) = generate_diffusion_dataset(2200, 7, &params, &cfg, &smoothing, 200).unwrap();
    let (model, epochs) = train_vae(&ds, 32, 200, 0);
    let recon = reconstruction_accuracy(&model, ds.test_samples(), 0.5).unwrap();

    let m64 = model.cast::<f64>();
    let check = TrenchCheck::default();
    let mut cases = Vec::new();
    let mut trench_like = 0;
    for s in ds.test_samples().take(20) {
        let target = binarize(&s.final_shape(), 0.5);
        let p = DesignProblem::new(target.to_field(), 32, 0.1, 0.2, 3.0).unwrap();
        let r = design(&p, &m64).unwrap();
        let d = r.binary_design();
        trench_like += check.is_trench_like(&d) as usize;
        cases.push((d, target));
    }
    let (report, _) = batch_roundtrip(&cases, &params, &smoothing).unwrap();
    let mean = report.mean_accuracy();
    let frac = trench_like as f64 / cases.len() as f64;
    let (a, b, c) = (recon.accuracy >= 0.92, mean >= 0.88, frac >= 0.90);
    outcome(
        a && b && c,
        format!(
            "(a) test reconstruction accuracy {:.4} [{}] (b) round-trip mean accuracy {:.4} over 20 targets [{}] (c) trench-like designs {:.0}% [{}]; {epochs} epochs",
            recon.accuracy,
            if a { "ok" } else { "below 0.92" },
            mean,
            if b { "ok" } else { "below 0.88" },
            100.0 * frac,
            if c { "ok" } else { "below 90%" },
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Litho pipeline on 32 x 32 masks.

fn mismatch(a: &BinaryImage, b: &BinaryImage) -> usize {
    a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count()
}

fn c8_litho_pipeline() -> Outcome {
    let size = 32;
    let cfg = MaskConfig::for_size(size);
    let litho = LithoParams::for_width(size);
    let (ds, _) = generate_litho_dataset(2000, 3, &litho, &cfg, 0).unwrap();
    let (model, epochs) = train_vae(&ds, 10, 200, 0);
    let (target, _, _) = two_squares(size);
    let naive = mismatch(&litho_forward(&target.to_field(), &litho).unwrap(), &target);
    let p = DesignProblem::new(target.to_field(), 10, 0.0, 0.0, 3.0).unwrap();
    let r = design(&p, &model.cast::<f64>()).unwrap();
    let printed = litho_forward(&r.binary_design().to_field(), &litho).unwrap();
    let designed = mismatch(&printed, &target);
    let reduction = 1.0 - designed as f64 / naive as f64;
    outcome(
        reduction >= 0.30,
        format!(
            "printed-pattern squared error: naive mask {naive}, designed mask {designed}, reduction {:.1}% (need 30%); {epochs} epochs",
            100.0 * reduction
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Determinism of the CLI and bit-exact formats.

fn run_cli(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_lvae"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("lvae runs");
    assert!(status.status.success(), "lvae {args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn same_bytes(dir: &Path, a: &str, b: &str) -> bool {
    std::fs::read(dir.join(a)).unwrap() == std::fs::read(dir.join(b)).unwrap()
}

fn c9_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("small.toml"),
        "[datagen.trench]\nwidth = 16\nheight = 32\nsurface_row = 8\ntrench_width = [3, 5]\ntrench_depth = [3, 10]\n\
         two_trench_probability = 0.5\nmin_gap = 2\n\n[datagen.mask]\nsize = 16\nmin_edits = 2\nmax_edits = 6\n\
         edit_size = [2, 4]\nouter_offset = 1\n\n[vae]\nhidden = [32, 32]\nbatch_size = 16\n",
    )
    .unwrap();
    let mut checks = Vec::new();
    for run in ["a", "b"] {
        for problem in ["diffusion", "litho"] {
            let out = format!("{problem}_{run}.lvae");
            run_cli(
                dir,
                &["--config", "small.toml", "gen-data", "--problem", problem, "--count", "12", "--test-count", "2", "--seed", "5", "--out", &out],
            );
        }
        let out = format!("model_{run}.lvnn");
        run_cli(
            dir,
            &["--config", "small.toml", "train", "--data", "litho_a.lvae", "--epochs", "3", "--seed", "9", "--out", &out],
        );
    }
    checks.push(("diffusion dataset", same_bytes(dir, "diffusion_a.lvae", "diffusion_b.lvae")));
    checks.push((
        "diffusion manifest",
        same_bytes(dir, "diffusion_a.lvae.manifest", "diffusion_b.lvae.manifest"),
    ));
    checks.push(("litho dataset", same_bytes(dir, "litho_a.lvae", "litho_b.lvae")));
    checks.push(("checkpoint", same_bytes(dir, "model_a.lvnn", "model_b.lvnn")));

    let ds = Dataset::load(&dir.join("diffusion_a.lvae")).unwrap();
    ds.save(&dir.join("resaved.lvae"), &[]).unwrap();
    checks.push(("dataset round trip", same_bytes(dir, "diffusion_a.lvae", "resaved.lvae")));
    let bytes = std::fs::read(dir.join("model_a.lvnn")).unwrap();
    let (m, a) = decode_checkpoint::<f32>(&bytes).unwrap();
    checks.push(("checkpoint round trip", encode_checkpoint(&m, &a).unwrap() == bytes));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} byte-level comparisons identical", checks.len())
        } else {
            format!("differences in: {}", failed.join(", "))
        },
    )
}

// ---------------------------------------------------------------------------
// 10. Linearity, monotonicity, mirror equivariance, FFT agreement.

fn c10_litho_properties() -> Outcome {
    let n = 64;
    let params = LithoParams::for_width(n);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_lin: f64 = 0.0;
    let mut worst_fft: f64 = 0.0;
    let mut monotone = true;
    let mut mirror = true;
    for _ in 0..3 {
        let a = Field2D::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let b = Field2D::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
        let (s, t) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let combo = a.zip_map(&b, |x, y| s * x + t * y).unwrap();
        let (ia, ib) = (aerial_image(&a, &params).unwrap(), aerial_image(&b, &params).unwrap());
        let lhs = aerial_image(&combo, &params).unwrap();
        let rhs = ia.zip_map(&ib, |x, y| s * x + t * y).unwrap();
        worst_lin = worst_lin.max(lhs.max_abs_diff(&rhs).unwrap());

        let lo = BinaryImage::from_fn(n, n, |_, _| rng.random_bool(0.3));
        let hi = BinaryImage::from_fn(n, n, |r, c| lo.get(r, c) || rng.random_bool(0.3));
        let (al, ah) = (aerial_image(&lo.to_field(), &params).unwrap(), aerial_image(&hi.to_field(), &params).unwrap());
        monotone &= al.data().iter().zip(ah.data()).all(|(x, y)| *x <= *y + 1e-12);
        let (pl, ph) = (litho_forward(&lo.to_field(), &params).unwrap(), litho_forward(&hi.to_field(), &params).unwrap());
        monotone &= pl.data().iter().zip(ph.data()).all(|(x, y)| x <= y);

        let printed = litho_forward(&lo.to_field(), &params).unwrap();
        mirror &= litho_forward(&lo.mirror_horizontal().to_field(), &params).unwrap() == printed.mirror_horizontal();
        mirror &= litho_forward(&lo.mirror_vertical().to_field(), &params).unwrap() == printed.mirror_vertical();

        let fft = aerial_image_fft(&a, &params).unwrap();
        worst_fft = worst_fft.max(fft.max_abs_diff(&ia).unwrap());
    }
    outcome(
        worst_lin < 1e-10 && worst_fft < 1e-10 && monotone && mirror,
        format!(
            "linearity error {worst_lin:.1e}, FFT vs direct {worst_fft:.1e} (tol 1e-10), monotone {monotone}, mirror-equivariant {mirror}"
        ),
    )
}


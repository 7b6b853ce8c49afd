//! Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use stinr::baselines::{
    column_mean_impute, dft, fourier_spectrum, lowrank_point, mf_als, MfConfig,
};
use stinr::data::{
    metrics, metrics_from_pairs, sample_mask, synth_graph_signal, synth_low_rank, synth_wave_field,
    GridField, MaskMode, ObservationSet, WaveParams,
};
use stinr::features::{sample_fourier_map, FourierConfig};
use stinr::graph::{normalized_laplacian, GraphSpec};
use stinr::linalg::{sym_eig, DenseMatrix, DenseTensor, DEFAULT_EIG_TOL};
use stinr::model::{
    expand_sine_layer, init_freq_mlp, lipschitz_bound, Activation, AxisDomain, FactorizedInr,
    MlpConfig, ModelBundle,
};
use stinr::pipeline::{fit_field, predict_grid, Fit, GraphAxis, ModelConfig};
use stinr::rng::SplitMix64;
use stinr::train::{grad_check, TrainConfig};

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

fn heldout_values(pred: &[f64], held: &ObservationSet) -> Vec<f64> {
    held.cells.iter().map(|&c| pred[c]).collect()
}

fn train_mask(field: &GridField, obs: &ObservationSet) -> GridField {
    let mut mask = vec![false; field.cells()];
    for &c in &obs.cells {
        mask[c] = true;
    }
    field.clone().with_mask(Some(mask)).unwrap()
}

fn timed(limit: Duration, started: Instant, mut o: Outcome) -> Outcome {
    let elapsed = started.elapsed();
    o.detail = format!(
        "{}; {:.1}s (limit {}s)",
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    o.pass &= elapsed < limit;
    o
}

fn gradient_exactness() -> Outcome {
    let started = Instant::now();
    let mut rng = SplitMix64::new(0xA1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for trial in 0..10u64 {
        let hidden = 4 + rng.below(13) as usize;
        let depth = 1 + rng.below(3) as usize;
        let maps = rng.below(4) as usize;
        let scales: Vec<f64> = (0..maps).map(|m| 0.5 * 2f64.powi(m as i32)).collect();
        let axes = (0..2u64)
            .map(|k| {
                let cfg = MlpConfig {
                    hidden,
                    depth,
                    out_dim: 2 + rng.below(4) as usize,
                    first_omega0: 1.0,
                    hidden_omega0: 1.0,
                    activation: Activation::Sine,
                    fourier: if maps == 0 {
                        FourierConfig::disabled(1)
                    } else {
                        FourierConfig::new(scales.clone(), 3, 1, trial * 10 + k)
                    },
                    head_scale: 1.0,
                };
                (AxisDomain::Continuous, cfg)
            })
            .collect();
        let mut model = FactorizedInr::init(axes, 1, trial).unwrap();
        for x in model.core_mut().as_mut_slice() {
            *x = rng.uniform(-1.0, 1.0);
        }
        let batch = 12;
        let coords: Vec<f64> = (0..2 * batch).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.normal()).collect();
        let r = grad_check(&model, &coords, &targets, 1e-5).unwrap();
        worst = worst.max(r.max_relative_error);
        checked += r.parameters_checked;
    }
    timed(
        Duration::from_secs(30),
        started,
        outcome(
            worst <= 1e-6,
            format!("max relative error {worst:.2e} over {checked} parameters"),
        ),
    )
}

fn sine_expansion() -> Outcome {
    let cfg = MlpConfig {
        hidden: 12,
        depth: 1,
        out_dim: 1,
        first_omega0: 1.0,
        hidden_omega0: 3.0,
        activation: Activation::Sine,
        fourier: FourierConfig::disabled(1),
        head_scale: 1.0,
    };
    let mut layer = init_freq_mlp(&cfg, 5).unwrap().hidden_layers()[0].clone();
    let mut rng = SplitMix64::new(0xA2);
    for b in &mut layer.bias {
        *b = rng.uniform(-PI, PI);
    }
    let expanded = expand_sine_layer(&layer);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..12).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let direct = layer.forward(&x).unwrap();
        let via = expanded.forward(&x).unwrap();
        for (a, b) in direct.iter().zip(&via) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max abs diff {worst:.2e} on 100 inputs"),
    )
}

fn kernel_stationarity() -> Outcome {
    let map =
        sample_fourier_map(&FourierConfig::new(vec![0.5, 1.0, 2.0, 4.0], 8, 2, 0xA3)).unwrap();
    let mut rng = SplitMix64::new(0xA3);
    let mut shift_err: f64 = 0.0;
    let mut closed_err: f64 = 0.0;
    for _ in 0..1000 {
        let u = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let v = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        let s = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
        let k = map.composed_kernel(&u, &v).unwrap();
        let shifted = map
            .composed_kernel(&[u[0] + s[0], u[1] + s[1]], &[v[0] + s[0], v[1] + s[1]])
            .unwrap();
        shift_err = shift_err.max((k - shifted).abs());
        // Independent closed form: Σ_rows cos(2π b·(u − v)).
        let mut cosine = 0.0;
        for b in map.bases() {
            for r in 0..b.rows() {
                cosine +=
                    (2.0 * PI * (b[(r, 0)] * (u[0] - v[0]) + b[(r, 1)] * (u[1] - v[1]))).cos();
            }
        }
        closed_err = closed_err.max((k - cosine).abs());
    }
    let worst = shift_err.max(closed_err);
    outcome(
        worst <= 1e-9,
        format!(
            "shift error {shift_err:.2e}, closed-form error {closed_err:.2e} over 1000 triples"
        ),
    )
}

fn discrete_factorization() -> Outcome {
    let dims = [7usize, 9];
    let axes = (0..2u64)
        .map(|k| {
            let cfg = MlpConfig {
                hidden: 10,
                depth: 2,
                out_dim: 5,
                first_omega0: 1.0,
                hidden_omega0: 1.0,
                activation: Activation::Sine,
                fourier: FourierConfig::new(vec![0.5, 1.0], 4, 1, 40 + k),
                head_scale: 1.0,
            };
            (AxisDomain::Continuous, cfg)
        })
        .collect();
    let mut model = FactorizedInr::init(axes, 1, 0xA4).unwrap();
    let mut rng = SplitMix64::new(0xA4);
    for x in model.core_mut().as_mut_slice() {
        *x = rng.uniform(-1.0, 1.0);
    }
    let lattice: Vec<Vec<f64>> = dims
        .iter()
        .map(|&n| (0..n).map(|i| i as f64).collect())
        .collect();

    model.reset_axis_evaluations();
    let grid = model.forward_grid(&lattice).unwrap();
    let evaluations = model.axis_evaluations();

    // Stack per-coordinate factor rows into U (7×5) and V (9×5), then form U M Vᵀ.
    let stack = |k: usize| {
        let rows: Vec<Vec<f64>> = lattice[k]
            .iter()
            .map(|&c| model.eval_axis(k, &[c]).unwrap())
            .collect();
        DenseMatrix::from_rows(&rows).unwrap()
    };
    let (u, v) = (stack(0), stack(1));
    let core = DenseMatrix::new(5, 5, model.core().as_slice().to_vec()).unwrap();
    let product = u.matmul(&core).unwrap().matmul(&v.transpose()).unwrap();
    let worst = grid
        .as_slice()
        .iter()
        .zip(product.as_slice())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let expected = dims.iter().sum::<usize>() as u64;
    outcome(
        worst <= 1e-12 && evaluations == expected,
        format!("max diff {worst:.2e}; {evaluations} axis evaluations (Σn = {expected}, Πn = 63)"),
    )
}

fn eigensolver() -> Outcome {
    let path = sym_eig(
        &normalized_laplacian(&GraphSpec::path(3).unwrap()),
        DEFAULT_EIG_TOL,
    )
    .unwrap();
    let path_err = path
        .eigenvalues
        .iter()
        .zip([0.0, 1.0, 2.0])
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let mut rng = SplitMix64::new(0xA5);
    let mut worst_rel: f64 = 0.0;
    for n in [1usize, 2, 5, 16, 33, 64] {
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x = rng.normal();
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        let e = sym_eig(&a, DEFAULT_EIG_TOL).unwrap();
        let q = &e.eigenvectors;
        let rebuilt = q
            .matmul(&DenseMatrix::from_diag(&e.eigenvalues))
            .unwrap()
            .matmul(&q.transpose())
            .unwrap();
        let rel = rebuilt.sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        worst_rel = worst_rel.max(rel);
    }
    outcome(
        path_err <= 1e-8 && worst_rel <= 1e-8,
        format!(
            "path eigenvalue error {path_err:.2e}; worst relative reconstruction {worst_rel:.2e}"
        ),
    )
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn implicit_low_rank() -> Outcome {
    let started = Instant::now();
    let field = synth_low_rank(100, 120, 5, 6).unwrap();
    let (train, held) = sample_mask(&field, MaskMode::Pointwise, 0.3, 6).unwrap();
    let cfg = ModelConfig {
        depth: 3,
        factor_dim: Some(100),
        head_scale: 0.1,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 5000,
        log_every: 100,
        ..TrainConfig::default()
    };
    let fit = fit_field(&field, &train, None, &cfg, &tc, 6).unwrap();
    let pred = predict_grid(&fit.bundle, field.dims(), 1).unwrap();
    let p = heldout_values(pred.values().as_slice(), &held);
    let rmse = metrics_from_pairs(&p, held.values.as_slice()).unwrap().rmse;
    let sd = std_dev(field.values().as_slice());
    let erank = lowrank_point(5000, &pred.as_matrix().unwrap())
        .unwrap()
        .effective_rank
        .unwrap_or(f64::INFINITY);
    timed(
        Duration::from_secs(180),
        started,
        outcome(
            rmse <= 0.1 * sd && erank <= 10.0,
            format!(
                "heldout RMSE {rmse:.4} vs 0.1·std {:.4}; effective rank {erank:.3}",
                0.1 * sd
            ),
        ),
    )
}

fn wave_field() -> GridField {
    synth_wave_field(64, 128, &WaveParams::default(), 0.0, 8).unwrap()
}

fn spectral_bias() -> Outcome {
    let field = wave_field();
    let tc = TrainConfig {
        steps: 2000,
        log_every: 100,
        ..TrainConfig::default()
    };
    let crf = ModelConfig::default();
    let plain = ModelConfig {
        scales: Vec::new(),
        activation: Activation::Relu,
        ..ModelConfig::default()
    };
    let mut ratios = Vec::new();
    for seed in 0..3u64 {
        let (train, _) = sample_mask(&field, MaskMode::Pointwise, 0.15, 70 + seed).unwrap();
        let a = fit_field(&field, &train, None, &crf, &tc, seed).unwrap();
        let b = fit_field(&field, &train, None, &plain, &tc, seed).unwrap();
        let (la, lb) = (a.curve.last().unwrap(), b.curve.last().unwrap());
        ratios.push(lb / la);
    }
    let wins = ratios.iter().filter(|&&r| r >= 5.0).count();
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3e}")).collect();
    outcome(
        wins == 3,
        format!(
            "plain/CRF training MSE ratio at step 2000: [{}]; {wins}/3 ≥ 5",
            shown.join(", ")
        ),
    )
}

fn traffic_state_estimation() -> Outcome {
    let started = Instant::now();
    let field = wave_field();
    let (train, held) = sample_mask(&field, MaskMode::Pointwise, 0.15, 8).unwrap();
    let cfg = ModelConfig {
        scales: vec![0.25, 0.5, 1.0],
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 2000,
        log_every: 100,
        ..TrainConfig::default()
    };
    let fit = fit_field(&field, &train, None, &cfg, &tc, 8).unwrap();
    let pred = predict_grid(&fit.bundle, field.dims(), 1).unwrap();
    let truth = held.values.as_slice();
    let inr = metrics_from_pairs(&heldout_values(pred.values().as_slice(), &held), truth).unwrap();
    let mf = mf_als(
        &train_mask(&field, &train),
        &MfConfig {
            rank: 10,
            ..MfConfig::default()
        },
    )
    .unwrap();
    let mf = metrics_from_pairs(&heldout_values(mf.completed.as_slice(), &held), truth).unwrap();
    timed(
        Duration::from_secs(120),
        started,
        outcome(
            inr.wmape <= 15.0 && inr.wmape < mf.wmape,
            format!(
                "INR WMAPE {:.2}%, MF(r=10) WMAPE {:.2}%",
                inr.wmape, mf.wmape
            ),
        ),
    )
}

fn kriging_setup() -> (GridField, ObservationSet, ObservationSet, GraphAxis) {
    let ring = GraphSpec::ring(64).unwrap();
    let field = synth_graph_signal(&ring, 96, 8, 9).unwrap();
    let (train, held) = sample_mask(&field, MaskMode::ColumnDrop, 0.6, 9).unwrap();
    (
        field,
        train,
        held,
        GraphAxis {
            axis: 0,
            graph: ring,
        },
    )
}

fn kriging_fit(field: &GridField, train: &ObservationSet, graph: &GraphAxis) -> Fit {
    let cfg = ModelConfig {
        scales: Vec::new(),
        head_scale: 0.1,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 2000,
        log_every: 100,
        ..TrainConfig::default()
    };
    fit_field(field, train, Some(graph), &cfg, &tc, 9).unwrap()
}

fn kriging(field: &GridField, train: &ObservationSet, held: &ObservationSet, fit: &Fit) -> Outcome {
    let pred = predict_grid(&fit.bundle, field.dims(), 1).unwrap();
    let truth = held.values.as_slice();
    let inr = metrics_from_pairs(&heldout_values(pred.values().as_slice(), held), truth).unwrap();
    let mean = column_mean_impute(&train_mask(field, train)).unwrap();
    let mean = metrics_from_pairs(&heldout_values(mean.as_slice(), held), truth).unwrap();
    let reduction = 1.0 - inr.wmape / mean.wmape;
    outcome(
        reduction >= 0.3,
        format!(
            "INR WMAPE {:.2}%, column-mean WMAPE {:.2}%, relative reduction {:.1}%",
            inr.wmape,
            mean.wmape,
            100.0 * reduction
        ),
    )
}

fn lipschitz(fit: &Fit) -> Outcome {
    let model = &fit.bundle.model;
    let AxisDomain::Graph { embedding } = &model.axes()[0].domain else {
        return outcome(false, "kriging model has no graph axis");
    };
    let mut rng = SplitMix64::new(0xAA);
    let n = embedding.rows();
    let k = embedding.cols();
    // Half the points are node embeddings (possibly perturbed off the node set), half
    // are arbitrary vectors in the embedding space.
    let sample = |rng: &mut SplitMix64, i: usize| -> Vec<Vec<f64>> {
        let e: Vec<f64> = if i % 2 == 0 {
            let node = rng.below(n);
            embedding
                .row(node)
                .iter()
                .map(|x| x + 0.01 * rng.normal())
                .collect()
        } else {
            (0..k).map(|_| rng.uniform(-0.3, 0.3)).collect()
        };
        vec![e, vec![rng.uniform(-1.2, 1.2)]]
    };
    let pairs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..1000)
        .map(|i| (sample(&mut rng, i), sample(&mut rng, i + 1)))
        .collect();
    let delta = pairs
        .iter()
        .flat_map(|(a, b)| a.iter().chain(b.iter()))
        .map(|v| v.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let bound = lipschitz_bound(model, delta).unwrap();
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for (e, e2) in &pairs {
        let f = model.forward_inputs(e).unwrap()[0];
        let g = model.forward_inputs(e2).unwrap()[0];
        let lhs = (f - g).abs();
        let rhs = bound.closed_form(e, e2);
        if lhs > rhs || bound.telescoped(e, e2) > rhs {
            violations += 1;
        }
        tightest = tightest.max(lhs / bound.telescoped(e, e2));
    }
    outcome(
        violations == 0,
        format!(
            "{violations} violations in 1000 pairs (η {:.3}, ξ {:.3}, δ {:.3}); max |Δf|/telescoped {tightest:.3e}",
            bound.eta, bound.xi, bound.delta
        ),
    )
}

fn determinism() -> Outcome {
    let field = synth_wave_field(32, 48, &WaveParams::default(), 0.5, 11).unwrap();
    let (train, _) = sample_mask(&field, MaskMode::Pointwise, 0.3, 11).unwrap();
    let cfg = ModelConfig {
        hidden: 24,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        steps: 300,
        batch_size: 128,
        log_every: 10,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    let mut curves = Vec::new();
    for run in 0..2 {
        let fit = fit_field(&field, &train, None, &cfg, &tc, 11).unwrap();
        let path = dir.path().join(format!("model{run}.stinr"));
        fit.bundle.save(&path).unwrap();
        files.push(std::fs::read(&path).unwrap());
        curves.push(fit.curve.to_csv());
    }
    let loaded = ModelBundle::load(dir.path().join("model0.stinr")).unwrap();
    let original = ModelBundle::from_bytes(&files[0]).unwrap();
    let fresh = fit_field(&field, &train, None, &cfg, &tc, 11).unwrap();
    let a = predict_grid(&fresh.bundle, field.dims(), 3).unwrap();
    let b = predict_grid(&loaded, field.dims(), 3).unwrap();
    let same_outputs = a
        .values()
        .as_slice()
        .iter()
        .zip(b.values().as_slice())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let pass = files[0] == files[1] && curves[0] == curves[1] && same_outputs && original == loaded;
    outcome(
        pass,
        format!(
            "model files identical: {}; loss curves identical: {}; roundtrip outputs bit-exact: {}",
            files[0] == files[1],
            curves[0] == curves[1],
            same_outputs
        ),
    )
}

fn metrics_and_spectrum() -> Outcome {
    let mut rng = SplitMix64::new(0xAC);
    let dims = vec![9, 11];
    let cells = 99;
    let truth: Vec<f64> = (0..cells).map(|_| rng.uniform(5.0, 60.0)).collect();
    let pred: Vec<f64> = truth.iter().map(|t| t + rng.normal()).collect();
    let eval: Vec<bool> = (0..cells).map(|_| rng.next_f64() < 0.4).collect();
    let tf =
        GridField::from_tensor(DenseTensor::new(dims.clone(), truth.clone()).unwrap()).unwrap();
    let pf = GridField::from_tensor(DenseTensor::new(dims, pred.clone()).unwrap()).unwrap();
    let report = metrics(&pf, &tf, &eval).unwrap();
    let (mut abs, mut sq, mut denom, mut n) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..cells {
        if eval[i] {
            abs += (pred[i] - truth[i]).abs();
            sq += (pred[i] - truth[i]).powi(2);
            denom += truth[i].abs();
            n += 1.0;
        }
    }
    let metric_err = (report.wmape - 100.0 * abs / denom)
        .abs()
        .max((report.rmse - (sq / n).sqrt()).abs())
        .max((report.mae - abs / n).abs());

    let mut spec_err: f64 = 0.0;
    let mut parseval_err: f64 = 0.0;
    for len in [2usize, 7, 64, 101] {
        let x: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let s = fourier_spectrum(&x).unwrap();
        for (k, &m) in s.magnitudes.iter().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let angle = 2.0 * PI * (k * t) as f64 / len as f64;
                re += v * angle.cos();
                im -= v * angle.sin();
            }
            let interior = k > 0 && 2 * k != len;
            let expected =
                (re * re + im * im).sqrt() / len as f64 * if interior { 2.0 } else { 1.0 };
            spec_err = spec_err.max((m - expected).abs());
        }
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = dft(&x)
            .iter()
            .map(|(re, im)| re * re + im * im)
            .sum::<f64>()
            / len as f64;
        parseval_err = parseval_err.max((energy - spectral).abs());
    }
    outcome(
        metric_err <= 1e-12 && spec_err <= 1e-9 && parseval_err <= 1e-9,
        format!("metrics {metric_err:.2e}; spectrum {spec_err:.2e}; Parseval {parseval_err:.2e}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let o = f();
        println!(
            "{} [{name}] {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    run("1 gradient exactness", &mut gradient_exactness);
    run("2 sine layer expansion", &mut sine_expansion);
    run("3 kernel stationarity", &mut kernel_stationarity);
    run("4 discrete factorization", &mut discrete_factorization);
    run("5 eigensolver", &mut eigensolver);
    run("6 implicit low rank", &mut implicit_low_rank);
    run("7 spectral bias", &mut spectral_bias);
    run("8 traffic state estimation", &mut traffic_state_estimation);
    let (field, train, held, graph) = kriging_setup();
    let started = Instant::now();
    let fit = kriging_fit(&field, &train, &graph);
    let fit_time = started.elapsed();
    run("9 kriging", &mut || {
        let mut o = kriging(&field, &train, &held, &fit);
        o.detail = format!("{}; fit {:.1}s", o.detail, fit_time.as_secs_f64());
        o
    });
    run("10 lipschitz bound", &mut || lipschitz(&fit));
    run("11 determinism and serialization", &mut determinism);
    run("12 metrics and spectrum oracles", &mut metrics_and_spectrum);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

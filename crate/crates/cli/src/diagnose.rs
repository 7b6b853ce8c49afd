use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;
use stinr::baselines::{fourier_spectrum, lowrank_csv, lowrank_track};
use stinr::data::{load_grid_csv, GridLayout};
use stinr::features::{sample_fourier_map, FourierConfig};
use stinr::model::{lipschitz_bound, AxisDomain, ModelBundle};
use stinr::pipeline::{grid_dims, predict_grid};
use stinr::rng::SplitMix64;

use crate::config::Seeds;
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

pub fn spectrum(
    data: &Path,
    layout: GridLayout,
    axis: usize,
    index: usize,
    out: &Path,
) -> CliResult<()> {
    let field = load_grid_csv(data, layout)?;
    if field.arity() != 2 || field.channels() != 1 {
        return Err(CliError::Data(
            "spectrum needs a 2-D single-channel field".into(),
        ));
    }
    if axis > 1 {
        return Err(CliError::Config("axis must be 0 or 1".into()));
    }
    let dims = field.dims().to_vec();
    let other = 1 - axis;
    if index >= dims[other] {
        return Err(CliError::Config(format!(
            "index {index} is out of range for axis {other} of size {}",
            dims[other]
        )));
    }
    let series: Vec<f64> = (0..dims[axis])
        .map(|p| {
            let mut at = [0; 2];
            at[axis] = p;
            at[other] = index;
            field.cell_values(field.cell_offset(&at))[0]
        })
        .collect();
    let s = fourier_spectrum(&series)?;
    info!(
        "dominant bin {} at {:.4} cycles/sample",
        s.dominant_bin(),
        s.frequencies[s.dominant_bin()]
    );
    let mut dir = OutputDir::create(out)?;
    dir.write("spectrum.csv", s.to_csv())?;
    dir.finish(
        "diagnose spectrum",
        json!({ "data": data, "layout": layout, "axis": axis, "index": index }),
        Seeds::default(),
    )?;
    Ok(())
}

/// One snapshot per data file (steps 0, 1, …) or the base-grid prediction of a model.
pub fn lowrank(
    data: &[PathBuf],
    layout: GridLayout,
    model: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let mut snapshots = Vec::new();
    for (step, path) in data.iter().enumerate() {
        snapshots.push((step, load_grid_csv(path, layout)?.as_matrix()?));
    }
    if let Some(path) = model {
        let bundle = ModelBundle::load(path)?;
        let grid = predict_grid(&bundle, &grid_dims(&bundle)?, 1)?;
        snapshots.push((snapshots.len(), grid.as_matrix()?));
    }
    if snapshots.is_empty() {
        return Err(CliError::Config(
            "lowrank needs at least one --data file or a --model".into(),
        ));
    }
    let points = lowrank_track(&snapshots)?;
    let mut dir = OutputDir::create(out)?;
    dir.write("lowrank.csv", lowrank_csv(&points))?;
    dir.finish(
        "diagnose lowrank",
        json!({ "data": data, "layout": layout, "model": model }),
        Seeds::default(),
    )?;
    Ok(())
}

/// Compares the encoding kernel at `(u, v)` and `(u + s, v + s)` with its cosine form.
pub fn kernel(
    scales: Vec<f64>,
    rows: usize,
    dim: usize,
    points: usize,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    if points == 0 {
        return Err(CliError::Config("points must be at least 1".into()));
    }
    if scales.is_empty() {
        return Err(CliError::Config("kernel needs at least one scale".into()));
    }
    let cfg = FourierConfig::new(scales.clone(), rows, dim, seed);
    cfg.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let map = sample_fourier_map(&cfg)?;
    let mut rng = SplitMix64::new(seed ^ 0x6b65_726e_656c);
    let mut csv = String::from("point,composed,shifted,closed_form\n");
    let (mut shift_err, mut form_err) = (0.0_f64, 0.0_f64);
    for p in 0..points {
        let u: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let us: Vec<f64> = u.iter().zip(&s).map(|(a, b)| a + b).collect();
        let vs: Vec<f64> = v.iter().zip(&s).map(|(a, b)| a + b).collect();
        let k = map.composed_kernel(&u, &v)?;
        let ks = map.composed_kernel(&us, &vs)?;
        let kc = map.stationary_kernel(&u, &v)?;
        shift_err = shift_err.max((k - ks).abs());
        form_err = form_err.max((k - kc).abs());
        let _ = writeln!(csv, "{p},{k:.16e},{ks:.16e},{kc:.16e}");
    }
    println!("max |k(u,v) - k(u+s,v+s)| = {shift_err:.3e}, max |k - cosine form| = {form_err:.3e}");
    let mut dir = OutputDir::create(out)?;
    dir.write("kernel.csv", csv)?;
    dir.write_json(
        "summary.json",
        &json!({ "max_shift_error": shift_err, "max_closed_form_error": form_err }),
    )?;
    dir.finish(
        "diagnose kernel",
        json!({ "scales": scales, "rows": rows, "dim": dim, "points": points, "seed": seed }),
        Seeds {
            model: 0,
            data: seed,
        },
    )?;
    Ok(())
}

/// Random input pairs against both Lipschitz bounds. Graph axes draw embedding rows,
/// continuous axes draw from `[-1, 1]`.
pub fn lipschitz(model: &Path, pairs: usize, seed: u64, out: &Path) -> CliResult<()> {
    if pairs == 0 {
        return Err(CliError::Config("pairs must be at least 1".into()));
    }
    let bundle = ModelBundle::load(model)?;
    let m = &bundle.model;
    let mut rng = SplitMix64::new(seed);
    let draw = |rng: &mut SplitMix64| -> Vec<Vec<f64>> {
        m.axes()
            .iter()
            .map(|a| match &a.domain {
                AxisDomain::Continuous => vec![rng.uniform(-1.0, 1.0)],
                AxisDomain::Graph { embedding } => {
                    embedding.row(rng.below(embedding.rows())).to_vec()
                }
            })
            .collect()
    };
    let samples: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..pairs)
        .map(|_| (draw(&mut rng), draw(&mut rng)))
        .collect();
    let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
    let delta = samples
        .iter()
        .flat_map(|(a, b)| a.iter().chain(b))
        .map(|v| l1(v))
        .fold(0.0, f64::max);
    let bound = lipschitz_bound(m, delta)?;
    let mut csv = String::from("pair,distance,telescoped,closed_form\n");
    let mut violations = 0;
    let mut worst_ratio = 0.0_f64;
    for (p, (e, e2)) in samples.iter().enumerate() {
        let y = m.forward_inputs(e)?;
        let y2 = m.forward_inputs(e2)?;
        let dist = y
            .iter()
            .zip(&y2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let tele = bound.telescoped(e, e2);
        let closed = bound.closed_form(e, e2);
        if dist > tele * (1.0 + 1e-12) || tele > closed * (1.0 + 1e-12) {
            violations += 1;
        }
        if tele > 0.0 {
            worst_ratio = worst_ratio.max(dist / tele);
        }
        let _ = writeln!(csv, "{p},{dist:.16e},{tele:.16e},{closed:.16e}");
    }
    println!("{violations} violations over {pairs} pairs; max observed/telescoped ratio {worst_ratio:.3e}");
    let mut dir = OutputDir::create(out)?;
    dir.write("lipschitz.csv", csv)?;
    dir.write_json(
        "summary.json",
        &json!({
            "eta": bound.eta,
            "xi": bound.xi,
            "delta": bound.delta,
            "stages": bound.stages,
            "axis_lipschitz": bound.axis_lipschitz,
            "axis_sup": bound.axis_sup,
            "violations": violations,
            "max_ratio": worst_ratio,
        }),
    )?;
    dir.finish(
        "diagnose lipschitz",
        json!({ "model": model, "pairs": pairs, "seed": seed }),
        Seeds {
            model: 0,
            data: seed,
        },
    )?;
    if violations > 0 {
        return Err(CliError::Numerical(format!(
            "{violations} pairs exceed the bound"
        )));
    }
    Ok(())
}

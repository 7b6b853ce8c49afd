use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::{json, Value};
use stinr::baselines::{column_mean_impute, mf_als, svt_complete, MfConfig, SvtConfig};
use stinr::data::{
    load_grid_csv, metrics_from_pairs, sample_mask, synth_graph_signal, synth_low_rank,
    synth_wave_field, GridField, GridLayout, MaskMode, MetricsReport, ObservationSet, WaveParams,
};
use stinr::graph::{load_adjacency, GraphSpec};
use stinr::linalg::DenseTensor;
use stinr::model::{AxisDomain, ModelBundle};
use stinr::pipeline::{
    fit_field, grid_dims, predict_grid, split_hidden, unreachable_hidden, GraphAxis,
};

use crate::config::{RunConfig, Seeds};
use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

pub enum SynthKind {
    Wave {
        nx: usize,
        nt: usize,
        noise: f64,
        params: WaveParams,
    },
    LowRank {
        rows: usize,
        cols: usize,
        rank: usize,
    },
    Graph {
        nodes: usize,
        steps: usize,
        bandwidth: usize,
    },
}

fn ring_edge_list(g: &GraphSpec) -> String {
    let mut s = String::from("src,dst,weight\n");
    let a = g.adjacency();
    for i in 0..g.node_count() {
        for j in 0..g.node_count() {
            if a[(i, j)] != 0.0 {
                let _ = writeln!(s, "{i},{j},{}", a[(i, j)]);
            }
        }
    }
    s
}

pub fn synth(kind: SynthKind, seed: u64, out: &Path) -> CliResult<()> {
    let mut dir = OutputDir::create(out)?;
    let (name, params, field) = match kind {
        SynthKind::Wave {
            nx,
            nt,
            noise,
            params,
        } => {
            let field = synth_wave_field(nx, nt, &params, noise, seed)?;
            let echo = json!({ "nx": nx, "nt": nt, "noise": noise, "wave": params });
            ("wave", echo, field)
        }
        SynthKind::LowRank { rows, cols, rank } => {
            let field = synth_low_rank(rows, cols, rank, seed)?;
            (
                "lowrank",
                json!({ "rows": rows, "cols": cols, "rank": rank }),
                field,
            )
        }
        SynthKind::Graph {
            nodes,
            steps,
            bandwidth,
        } => {
            let ring = GraphSpec::ring(nodes)?;
            let field = synth_graph_signal(&ring, steps, bandwidth, seed)?;
            dir.write("adjacency.csv", ring_edge_list(&ring))?;
            let echo =
                json!({ "nodes": nodes, "steps": steps, "bandwidth": bandwidth, "graph": "ring" });
            ("graph", echo, field)
        }
    };
    dir.write_grid("field.csv", &field)?;
    info!("wrote {name} field {:?} to {}", field.dims(), out.display());
    dir.finish(
        "synth",
        json!({ "kind": name, "params": params, "seed": seed }),
        Seeds {
            model: 0,
            data: seed,
        },
    )?;
    Ok(())
}

fn read_node_list(path: &Path) -> CliResult<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<usize>().map_err(|_| {
                CliError::Data(format!(
                    "{} line {}: bad node id {l:?}",
                    path.display(),
                    i + 1
                ))
            })
        })
        .collect()
}

fn heldout_metrics(pred: &GridField, held: &ObservationSet) -> CliResult<Option<MetricsReport>> {
    if held.is_empty() {
        return Ok(None);
    }
    let ch = pred.channels();
    let p: Vec<f64> = held
        .cells
        .iter()
        .flat_map(|&c| pred.cell_values(c).to_vec())
        .collect();
    debug_assert_eq!(p.len(), held.len() * ch);
    Ok(Some(metrics_from_pairs(&p, held.values.as_slice())?))
}

struct Prepared {
    field: GridField,
    graph: Option<GraphAxis>,
    train: ObservationSet,
    held: ObservationSet,
    hidden: Option<Vec<usize>>,
}

fn prepare(cfg: &RunConfig, require_graph: bool) -> CliResult<Prepared> {
    let field = load_grid_csv(&cfg.data.path, cfg.data.layout)?;
    let graph = match &cfg.graph {
        Some(g) => {
            let nodes = *field.dims().get(g.axis).ok_or_else(|| {
                CliError::Config(format!("graph.axis {} exceeds the data arity", g.axis))
            })?;
            let spec = load_adjacency(&g.path, g.format, Some(nodes))?;
            if spec.node_count() != nodes {
                return Err(CliError::Data(format!(
                    "adjacency has {} nodes but the data has {nodes} along axis {}",
                    spec.node_count(),
                    g.axis
                )));
            }
            Some(GraphAxis {
                axis: g.axis,
                graph: spec,
            })
        }
        None if require_graph => {
            return Err(CliError::Config("krige needs a [graph] section".into()))
        }
        None => None,
    };
    let drop_axis = graph.as_ref().map_or(0, |g| g.axis);
    let (train, held, hidden) = match &cfg.data.hidden_nodes {
        Some(path) => {
            let hidden = read_node_list(path)?;
            let (t, h) = split_hidden(&field, drop_axis, &hidden)?;
            (t, h, Some(hidden))
        }
        None => {
            let mode = if require_graph {
                if drop_axis == 0 {
                    MaskMode::ColumnDrop
                } else {
                    MaskMode::RowDrop
                }
            } else {
                cfg.data.mask
            };
            if require_graph && cfg.data.mask == MaskMode::Pointwise {
                info!(
                    "krige hides whole nodes; using {mode:?} with rate {}",
                    cfg.data.rate
                );
            }
            let (t, h) = sample_mask(&field, mode, cfg.data.rate, cfg.seeds.data)?;
            let hidden = matches!(mode, MaskMode::ColumnDrop | MaskMode::RowDrop).then(|| {
                let mut nodes: Vec<usize> = h
                    .cells
                    .iter()
                    .map(|&c| field.cell_index(c)[drop_axis])
                    .collect();
                nodes.sort_unstable();
                nodes.dedup();
                nodes
            });
            (t, h, hidden)
        }
    };
    Ok(Prepared {
        field,
        graph,
        train,
        held,
        hidden,
    })
}

fn config_echo(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).expect("serializable config")
}

pub fn train(cfg: &RunConfig, krige: bool) -> CliResult<()> {
    let p = prepare(cfg, krige)?;
    if let (Some(g), Some(hidden)) = (&p.graph, &p.hidden) {
        let lost = unreachable_hidden(&g.graph, hidden);
        if !lost.is_empty() {
            warn!(
                "hidden nodes {lost:?} share no component with a visible node; predicting anyway"
            );
        }
    }
    info!(
        "training on {} cells, {} held out, {} steps",
        p.train.len(),
        p.held.len(),
        cfg.train.steps
    );
    let fit = fit_field(
        &p.field,
        &p.train,
        p.graph.as_ref(),
        &cfg.model,
        &cfg.train,
        cfg.seeds.model,
    )?;
    if let Some(l) = fit.curve.last() {
        info!("final training loss {l:.6e}");
    }
    let pred = predict_grid(&fit.bundle, p.field.dims(), 1)?;
    let heldout = heldout_metrics(&pred, &p.held)?;
    let mut metrics = json!({
        "train_cells": p.train.len(),
        "heldout_cells": p.held.len(),
        "final_train_loss": fit.curve.last(),
        "heldout": heldout,
    });
    if krige && p.field.arity() == 2 && p.field.channels() == 1 && !p.held.is_empty() {
        let mut mask = vec![false; p.field.cells()];
        for &c in &p.train.cells {
            mask[c] = true;
        }
        let train_field = p.field.clone().with_mask(Some(mask))?;
        if let Ok(mean) = column_mean_impute(&train_field) {
            let baseline: Vec<f64> = p.held.cells.iter().map(|&c| mean.as_slice()[c]).collect();
            metrics["column_mean_heldout"] =
                json!(metrics_from_pairs(&baseline, p.held.values.as_slice())?);
        }
        metrics["hidden_nodes"] = json!(p.hidden);
    }
    if let Some(m) = &heldout {
        println!("heldout {m}");
    }

    let mut dir = OutputDir::create(&cfg.output_dir)?;
    fit.bundle.save(dir.path("model.stinr"))?;
    dir.note_written("model.stinr");
    dir.write("loss.csv", fit.curve.to_csv())?;
    dir.write_grid("predictions.csv", &pred)?;
    dir.write_json("metrics.json", &metrics)?;
    dir.finish(
        if krige { "krige" } else { "train" },
        config_echo(cfg),
        cfg.seeds,
    )?;
    Ok(())
}

fn load_bundle(path: &Path) -> CliResult<ModelBundle> {
    Ok(ModelBundle::load(path)?)
}

fn read_query(path: &Path, arity: usize) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.split(',').any(|c| c.trim().parse::<f64>().is_err()))
        {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        CliError::Data(format!(
                            "{} line {}: bad coordinate {c:?}",
                            path.display(),
                            i + 1
                        ))
                    })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if row.len() != arity {
            return Err(CliError::Data(format!(
                "{} line {}: expected {arity} coordinates, found {}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no coordinates",
            path.display()
        )));
    }
    Ok(rows)
}

/// Raw grid coordinates, one row per query, to denormalized values.
pub fn infer(model: &Path, query: &Path, out: &Path) -> CliResult<()> {
    let bundle = load_bundle(model)?;
    let m = &bundle.model;
    let arity = m.arity();
    let ch = m.out_channels();
    let norm = bundle
        .normalizer
        .clone()
        .unwrap_or_else(|| stinr::data::Normalizer::identity(arity, ch));
    let rows = read_query(query, arity)?;
    let mut outside = 0;
    let mut coords = Vec::with_capacity(rows.len() * arity);
    for row in &rows {
        for (k, &raw) in row.iter().enumerate() {
            let x = norm.coord(k, raw);
            if matches!(m.axes()[k].domain, AxisDomain::Continuous) && x.abs() > 1.0 + 1e-12 {
                outside += 1;
            }
            coords.push(x);
        }
    }
    if outside > 0 {
        warn!("{outside} coordinates lie outside the training domain; evaluating anyway");
    }
    let preds = m.predict(&coords)?;
    let mut csv = String::new();
    let names: Vec<String> = (1..=arity).map(|k| format!("i{k}")).collect();
    let values: Vec<String> = if ch == 1 {
        vec!["value".into()]
    } else {
        (0..ch).map(|c| format!("value{c}")).collect()
    };
    let _ = writeln!(csv, "{},{}", names.join(","), values.join(","));
    for (s, row) in rows.iter().enumerate() {
        let cs: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let vs: Vec<String> = (0..ch)
            .map(|c| format!("{:.16e}", norm.raw_value(c, preds[s * ch + c])))
            .collect();
        let _ = writeln!(csv, "{},{}", cs.join(","), vs.join(","));
    }
    let mut dir = OutputDir::create(out)?;
    dir.write("values.csv", csv)?;
    dir.finish(
        "infer",
        json!({ "model": model, "query": query }),
        Seeds::default(),
    )?;
    Ok(())
}

/// Evaluates the model on its base grid refined `factor` times along continuous axes.
pub fn upsample(
    model: &Path,
    factor: usize,
    out: &Path,
    command: &str,
    file: &str,
) -> CliResult<()> {
    if factor == 0 {
        return Err(CliError::Config("factor must be at least 1".into()));
    }
    let bundle = load_bundle(model)?;
    let dims = grid_dims(&bundle)?;
    let grid = predict_grid(&bundle, &dims, factor)?;
    info!("upsampled {dims:?} to {:?}", grid.dims());
    let mut dir = OutputDir::create(out)?;
    dir.write_grid(file, &grid)?;
    dir.finish(
        command,
        json!({ "model": model, "factor": factor }),
        Seeds::default(),
    )?;
    Ok(())
}

pub struct BaselineArgs {
    pub data: PathBuf,
    pub layout: GridLayout,
    pub mask: MaskMode,
    pub rate: f64,
    pub seed: u64,
    pub strict: bool,
    pub out: PathBuf,
}

pub enum BaselineMethod {
    Mf(MfConfig),
    Svt(SvtConfig),
}

pub fn baseline(method: BaselineMethod, args: &BaselineArgs) -> CliResult<()> {
    if !(args.rate > 0.0 && args.rate < 1.0) {
        return Err(CliError::Config(format!(
            "rate {} must lie in (0, 1)",
            args.rate
        )));
    }
    let field = load_grid_csv(&args.data, args.layout)?;
    let (train, held) = sample_mask(&field, args.mask, args.rate, args.seed)?;
    let mut mask = vec![false; field.cells()];
    for &c in &train.cells {
        mask[c] = true;
    }
    let masked = field.clone().with_mask(Some(mask))?;
    let (name, completed, converged, extra) = match &method {
        BaselineMethod::Mf(cfg) => {
            let r = mf_als(&masked, cfg)?;
            let info = json!({ "iterations": r.iterations, "residual": r.residual });
            let r = if args.strict {
                r.require_converged()?
            } else {
                r
            };
            ("mf", r.completed.clone(), r.converged, info)
        }
        BaselineMethod::Svt(cfg) => {
            let r = svt_complete(&masked, cfg)?;
            let info = json!({ "iterations": r.iterations, "residual": r.residual, "nuclear_norm": r.nuclear_norm });
            let r = if args.strict {
                r.require_converged()?
            } else {
                r
            };
            ("svt", r.completed.clone(), r.converged, info)
        }
    };
    if !converged {
        warn!("{name} stopped before reaching its tolerance ({extra})");
    }
    let (rows, cols) = completed.shape();
    let grid = GridField::from_tensor(DenseTensor::new(vec![rows, cols], completed.into_vec())?)?;
    let heldout = heldout_metrics(&grid, &held)?;
    if let Some(m) = &heldout {
        println!("heldout {m}");
    }
    let config = match &method {
        BaselineMethod::Mf(c) => json!({ "method": "mf", "mf": c }),
        BaselineMethod::Svt(c) => json!({ "method": "svt", "svt": c }),
    };
    let mut dir = OutputDir::create(&args.out)?;
    dir.write_grid("completed.csv", &grid)?;
    dir.write_json(
        "metrics.json",
        &json!({ "converged": converged, "solver": extra, "heldout": heldout }),
    )?;
    let mut echo = config;
    echo["data"] =
        json!({ "path": args.data, "layout": args.layout, "mask": args.mask, "rate": args.rate });
    dir.finish(
        "baseline",
        echo,
        Seeds {
            model: 0,
            data: args.seed,
        },
    )?;
    Ok(())
}

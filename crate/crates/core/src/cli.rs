//! Command implementations behind the `meltpinn` binary: train, eval,
//! and the benchmark reports. Kept in the library so integration tests
//! drive them directly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ambench::mms_verify_3d;
use crate::config::{config_hash, BcMode, ConfigError, RunConfig};
use crate::network::{load_checkpoint, save_checkpoint, NetworkParams};
use crate::optimizer::{run_hard_vs_soft, train, EpochRecord, TrainConfig, TrainError, TrainResult};
use crate::physics::in625_material;
use crate::problem::{DomainBox, OutputLayout};
use crate::stefan::{
    analytic_interface, analytic_temperature, extract_interface, fem_solve_1d, l2_error, pinn_metrics,
    FemBc, FemInit, Slab, SolidificationProblem,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Validation failures: bad config, bad flags, shape mismatches.
    #[error("{0}")]
    Invalid(String),
    /// Training diverged; exit code 3.
    #[error("{0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Diverged(_) => 3,
            _ => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::Invalid(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn history_rows(history: &[EpochRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.l_data.to_string(),
                r.l_pde1.to_string(),
                r.l_pde2.to_string(),
                r.total.to_string(),
                r.lr.to_string(),
            ]
        })
        .collect()
}

const HISTORY_HEADER: [&str; 6] = ["epoch", "L_data", "L_pde1", "L_pde2", "total", "lr"];

fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), CliError> {
    write_csv(path, &HISTORY_HEADER, &history_rows(history))
}

fn write_manifest(dir: &Path, fields: serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&fields).expect("manifest is valid json");
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Smoke caps for laser-case training without the explicit opt-in flag:
/// the full-scale runs need labeled 3D data and hours of compute.
const SMOKE_MAX_EPOCHS: usize = 50;
const SMOKE_MAX_BATCH: usize = 2048;

pub struct TrainArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub full_scale: bool,
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf, CliError> {
    let (mut cfg, text) = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if cfg.problem.is_ambench()
        && !args.full_scale
        && (cfg.train.epochs > SMOKE_MAX_EPOCHS || cfg.train.batch_interior > SMOKE_MAX_BATCH)
    {
        return Err(CliError::Invalid(format!(
            "laser-case training beyond a smoke run (epochs <= {SMOKE_MAX_EPOCHS}, batch <= {SMOKE_MAX_BATCH}) requires --full-scale"
        )));
    }
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out_dir)?;

    let problem = cfg.build_problem()?;
    let params = NetworkParams::init(&cfg.network.layer_sizes, cfg.network.seed)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    if params.n_inputs() != problem.n_inputs() || params.n_outputs() != problem.n_outputs() {
        return Err(CliError::Invalid(format!(
            "network.layer_sizes maps {} -> {} but problem {} needs {} -> {}",
            params.n_inputs(),
            params.n_outputs(),
            problem.name,
            problem.n_inputs(),
            problem.n_outputs()
        )));
    }
    let tc = cfg.train_config();
    let result = train(&problem, params, &tc, Some(&out_dir))?;

    save_checkpoint(&result.params, &out_dir.join("checkpoint.bin"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_history(&out_dir.join("history.csv"), &result.history)?;
    write_manifest(
        &out_dir,
        serde_json::json!({
            "command": "train",
            "schema_version": crate::config::SCHEMA_VERSION,
            "problem": problem.name,
            "config_sha256": config_hash(&text),
            "network_seed": cfg.network.seed,
            "train_seed": cfg.train.seed,
            "bc_mode": if tc.hard_bc { "hard" } else { "soft" },
            "epochs": tc.epochs,
            "crate_version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(out_dir)
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub config: PathBuf,
    pub grid: String,
    pub out: Option<PathBuf>,
    /// Also extract melt-pool dimensions from the liquidus isotherm at
    /// this time and write them as JSON next to the field table.
    pub melt_pool_at: Option<f64>,
}

struct GridAxis {
    lo: f64,
    hi: f64,
    n: usize,
}

fn parse_grid(spec: &str, space_dim: usize) -> Result<Vec<GridAxis>, CliError> {
    let expected: Vec<&str> = match space_dim {
        1 => vec!["t", "x"],
        2 => vec!["t", "x", "y"],
        3 => vec!["t", "x", "y", "z"],
        d => return Err(CliError::Invalid(format!("unsupported space dimension {d}"))),
    };
    let mut axes: Vec<Option<GridAxis>> = (0..expected.len()).map(|_| None).collect();
    for part in spec.split(',') {
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("grid part {part:?} is not axis=lo:hi:count")))?;
        let idx = expected
            .iter()
            .position(|a| *a == name.trim())
            .ok_or_else(|| CliError::Invalid(format!("unknown grid axis {name:?} (expected {expected:?})")))?;
        let nums: Vec<&str> = range.split(':').collect();
        if nums.len() != 3 {
            return Err(CliError::Invalid(format!("grid range {range:?} is not lo:hi:count")));
        }
        let lo: f64 = nums[0].trim().parse().map_err(|_| CliError::Invalid(format!("bad number {:?}", nums[0])))?;
        let hi: f64 = nums[1].trim().parse().map_err(|_| CliError::Invalid(format!("bad number {:?}", nums[1])))?;
        let n: usize = nums[2].trim().parse().map_err(|_| CliError::Invalid(format!("bad count {:?}", nums[2])))?;
        axes[idx] = Some(GridAxis { lo, hi, n });
    }
    axes.into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| CliError::Invalid(format!("grid is missing axis {:?}", expected[i]))))
        .collect()
}

fn axis_values(a: &GridAxis) -> Vec<f64> {
    match a.n {
        0 => vec![],
        1 => vec![a.lo],
        n => (0..n).map(|i| a.lo + (a.hi - a.lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<PathBuf, CliError> {
    let (cfg, _) = RunConfig::from_path(&args.config)?;
    let problem = cfg.build_problem()?;
    let params = load_checkpoint(&args.checkpoint).map_err(|e| CliError::Invalid(e.to_string()))?;
    if params.n_inputs() != problem.n_inputs() || params.n_outputs() != problem.n_outputs() {
        return Err(CliError::Invalid(format!(
            "checkpoint maps {} -> {} but problem {} needs {} -> {}",
            params.n_inputs(),
            params.n_outputs(),
            problem.name,
            problem.n_inputs(),
            problem.n_outputs()
        )));
    }
    let model = problem
        .make_model(params, cfg.loss.bc_mode == BcMode::Hard)
        .map_err(|e| CliError::Invalid(e.to_string()))?;

    let axes = parse_grid(&args.grid, problem.space_dim())?;
    let values: Vec<Vec<f64>> = axes.iter().map(axis_values).collect();
    let mut header: Vec<&str> = match problem.space_dim() {
        1 => vec!["t", "x"],
        2 => vec!["t", "x", "y"],
        _ => vec!["t", "x", "y", "z"],
    };
    match problem.layout {
        OutputLayout::Thermal => header.push("T"),
        OutputLayout::ThermalFluid => header.extend(["u", "v", "w", "p", "T"]),
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut idx = vec![0usize; values.len()];
    'outer: loop {
        if values.iter().any(|v| v.is_empty()) {
            break;
        }
        let coord: Vec<f64> = idx.iter().zip(&values).map(|(&i, v)| v[i]).collect();
        let outs = model
            .predict(coord[0], &coord[1..])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut row: Vec<String> = coord.iter().map(|v| v.to_string()).collect();
        row.extend(outs.iter().map(|v| v.to_string()));
        rows.push(row);
        // odometer increment, innermost axis fastest
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < values[k].len() {
                continue 'outer;
            }
            idx[k] = 0;
            if k == 0 {
                break 'outer;
            }
        }
    }

    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.join("eval.csv"));
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir)?;
    }
    write_csv(&out, &header, &rows)?;

    if let Some(t_probe) = args.melt_pool_at {
        let case_id = cfg.problem.case_id().ok_or_else(|| {
            CliError::Invalid("--melt-pool-at applies to the laser-case problems".into())
        })?;
        let mut case = crate::ambench::build_case(case_id);
        if let Some(m) = &cfg.material {
            case.material = m.to_props();
        }
        let temp_idx = problem.layout.temp_index(problem.space_dim());
        let sampler = |x: f64, y: f64, z: f64| {
            model.predict(t_probe, &[x, y, z]).expect("dimensions fixed")[temp_idx]
        };
        let dims = crate::ambench::melt_pool_dims(&sampler, &problem.domain, case.material.t_liquidus);
        let report = crate::ambench::dims_report_json(&case, &dims);
        let json_path = out.with_extension("melt_pool.json");
        fs::write(&json_path, serde_json::to_string_pretty(&report).expect("valid json"))?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchKind {
    FemRefine,
    PinnRefine,
    HardVsSoft,
    Mms,
}

impl std::str::FromStr for BenchKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fem-refine" => Ok(BenchKind::FemRefine),
            "pinn-refine" => Ok(BenchKind::PinnRefine),
            "hard-vs-soft" => Ok(BenchKind::HardVsSoft),
            "mms" => Ok(BenchKind::Mms),
            other => Err(CliError::Invalid(format!(
                "unknown benchmark {other:?} (expected fem-refine, pinn-refine, hard-vs-soft or mms)"
            ))),
        }
    }
}

pub struct BenchArgs {
    pub kind: BenchKind,
    pub out: PathBuf,
    pub epochs: Option<usize>,
    pub seed: u64,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(&args.out)?;
    match args.kind {
        BenchKind::FemRefine => bench_fem_refine(args),
        BenchKind::PinnRefine => bench_pinn_refine(args),
        BenchKind::HardVsSoft => bench_hard_vs_soft(args),
        BenchKind::Mms => bench_mms(args),
    }
}

const FEM_RESOLUTIONS: [usize; 4] = [50, 100, 150, 200];
const FEM_DT: f64 = 1e-3;
const FEM_START: f64 = 1.0;

fn bench_fem_refine(args: &BenchArgs) -> Result<Vec<String>, CliError> {
    let setup = SolidificationProblem::default();
    let mut l2_rows = Vec::new();
    let mut summary = Vec::new();
    let mut l2_values = Vec::new();
    let mut n200_worst = f64::NAN;
    for &n in &FEM_RESOLUTIONS {
        let r = fem_solve_1d(
            n,
            FEM_DT,
            setup.window.1,
            &setup,
            FemBc::FixedEnds { left: setup.t_low, right: setup.t_high },
            FemInit::AnalyticAt(FEM_START),
            setup.window.0 - 0.1,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        let l2 = l2_error(
            &|x, t| r.sample(x, t),
            &|x, t| analytic_temperature(x, t).expect("window times are positive"),
            Slab { t: setup.window, x: setup.domain_x },
            51,
            121,
        );
        l2_values.push(l2);
        l2_rows.push(vec![n.to_string(), l2.to_string()]);

        let mut iface_rows = Vec::new();
        let mut worst = 0.0f64;
        let mut tq = setup.window.0;
        while tq <= setup.window.1 + 1e-9 {
            let temps: Vec<f64> = r.x.iter().map(|&x| r.sample(x, tq)).collect();
            let xi = extract_interface(&r.x, &temps, setup.t_melt)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let want = analytic_interface(tq).expect("positive time");
            worst = worst.max(((xi - want) / want).abs());
            iface_rows.push(vec![tq.to_string(), xi.to_string()]);
            tq += 0.25;
        }
        write_csv(&args.out.join(format!("fem_interface_n{n}.csv")), &["t", "interface_x"], &iface_rows)?;
        if n == 200 {
            n200_worst = worst;
        }
        summary.push(format!("fem n={n}: l2 = {l2:.6}, worst interface rel = {worst:.4}"));
    }
    write_csv(&args.out.join("fem_refine_l2.csv"), &["n_x", "l2_error"], &l2_rows)?;

    let monotone = l2_values.windows(2).all(|w| w[1] < w[0]);
    summary.push(format!(
        "{}: L2 error strictly decreasing over resolutions",
        if monotone { "PASS" } else { "FAIL" }
    ));
    summary.push(format!(
        "{}: n=200 interface trajectory within 3% of analytic (worst {:.4})",
        if n200_worst < 0.03 { "PASS" } else { "FAIL" },
        n200_worst
    ));
    finish_bench(args, "fem-refine", summary)
}

/// Collocation budgets matched to the FEM resolutions over the x-t slab.
const PINN_BUDGETS: [usize; 4] = [2_500, 10_000, 22_500, 40_000];

fn bench_pinn_refine(args: &BenchArgs) -> Result<Vec<String>, CliError> {
    let setup = SolidificationProblem::default();
    let problem = crate::stefan::build_pinn_problem(&setup, 256, args.seed);
    let epochs = args.epochs.unwrap_or(500);
    let mut rows = Vec::new();
    let mut l2s = Vec::new();
    let mut summary = Vec::new();
    for &budget in &PINN_BUDGETS {
        let params = NetworkParams::init(&[2, 64, 64, 64, 1], args.seed)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut tc = TrainConfig::with_defaults(epochs, budget, args.seed);
        tc.counts.dirichlet = 128;
        let result = train(&problem, params, &tc, None)?;
        let model = problem
            .make_model(result.params, true)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let m = pinn_metrics(&model, &setup).map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push(vec![budget.to_string(), m.l2.to_string()]);
        l2s.push(m.l2);
        summary.push(format!("pinn budget {budget}: l2 = {:.5}, interface rel = {:.4}", m.l2, m.max_interface_rel));
    }
    write_csv(&args.out.join("pinn_refine_l2.csv"), &["n_collocation", "l2_error"], &rows)?;
    let non_increasing = l2s.windows(2).all(|w| w[1] <= w[0] * 1.05);
    summary.push(format!(
        "{}: error non-increasing with collocation budget",
        if non_increasing { "PASS" } else { "FAIL" }
    ));
    finish_bench(args, "pinn-refine", summary)
}

fn bench_hard_vs_soft(args: &BenchArgs) -> Result<Vec<String>, CliError> {
    let setup = SolidificationProblem::default();
    let problem = crate::stefan::build_pinn_problem(&setup, 128, args.seed);
    let epochs = args.epochs.unwrap_or(300);
    let params = NetworkParams::init(&[2, 48, 48, 48, 1], args.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut tc = TrainConfig::with_defaults(epochs, 192, args.seed);
    tc.counts.dirichlet = 128;
    let (hard, soft) = run_hard_vs_soft(&problem, params, &tc)?;

    write_history(&args.out.join("hard_history.csv"), &hard.history)?;
    write_history(&args.out.join("soft_history.csv"), &soft.history)?;
    let mismatch_rows = |r: &TrainResult| {
        r.history
            .iter()
            .map(|e| vec![e.epoch.to_string(), e.bc_mismatch.to_string()])
            .collect::<Vec<_>>()
    };
    write_csv(&args.out.join("hard_bc_mismatch.csv"), &["epoch", "bc_mismatch"], &mismatch_rows(&hard))?;
    write_csv(&args.out.join("soft_bc_mismatch.csv"), &["epoch", "bc_mismatch"], &mismatch_rows(&soft))?;

    let hard_zero = hard.history.iter().all(|e| e.bc_mismatch == 0.0);
    let soft_positive = soft.history.iter().all(|e| e.bc_mismatch > 0.0);
    let pde = |r: &TrainResult| {
        let last = r.history.last().expect("non-empty history");
        last.l_pde1 + last.l_pde2
    };
    let hard_pde = pde(&hard);
    let soft_pde = pde(&soft);
    let summary = vec![
        format!("{}: hard boundary mismatch identically zero", if hard_zero { "PASS" } else { "FAIL" }),
        format!("{}: soft boundary mismatch positive at every epoch", if soft_positive { "PASS" } else { "FAIL" }),
        format!(
            "{}: hard final PDE loss ({hard_pde:.4e}) <= soft ({soft_pde:.4e})",
            if hard_pde <= soft_pde { "PASS" } else { "FAIL" }
        ),
    ];
    finish_bench(args, "hard-vs-soft", summary)
}

const MMS_POINTS: usize = 10_000;
const MMS_THRESHOLD: f64 = 1e-8;

fn bench_mms(args: &BenchArgs) -> Result<Vec<String>, CliError> {
    let domain = DomainBox {
        t: (0.0, 2.0e-3),
        x: vec![(0.0, 1.0e-3), (-0.2e-3, 0.2e-3), (-0.3e-3, 0.0)],
    };
    let worst = mms_verify_3d(&domain, &in625_material(), MMS_POINTS, args.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let pass = worst < MMS_THRESHOLD;
    write_csv(
        &args.out.join("mms_report.csv"),
        &["n_points", "max_scaled_residual", "threshold", "pass"],
        &[vec![
            MMS_POINTS.to_string(),
            worst.to_string(),
            MMS_THRESHOLD.to_string(),
            pass.to_string(),
        ]],
    )?;
    let summary = vec![format!(
        "{}: max scaled residual {worst:.3e} over {MMS_POINTS} points (threshold {MMS_THRESHOLD:.0e})",
        if pass { "PASS" } else { "FAIL" }
    )];
    finish_bench(args, "mms", summary)
}

fn finish_bench(args: &BenchArgs, kind: &str, summary: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut text = String::new();
    for line in &summary {
        let _ = writeln!(text, "{line}");
    }
    fs::write(args.out.join("bench_summary.txt"), &text)?;
    write_manifest(
        &args.out,
        serde_json::json!({
            "command": format!("bench {kind}"),
            "seed": args.seed,
            "epochs": args.epochs,
            "crate_version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(summary)
}

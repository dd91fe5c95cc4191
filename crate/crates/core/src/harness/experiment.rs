//! Experiment orchestration: every subcommand produces a deterministic
//! [`RunLedger`] and the artifacts it lists.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::decompose::{DirichletSolver, NewtonianSolver, Quadrature, Route, default_band};
use crate::error::{Error, Result};
use crate::field::{save_macf1, write_csv, Field, Grid2, SymMatrixField2, VectorField2};
use crate::jet::JetPair;
use crate::mollify::Mollifier;
use crate::nk::{
    chi_alpha_limit, exponent_bound_exact, measure_holder_jets, rate_budget_exact, run_nash_kuiper, Family, NkConfig,
    NkLedger,
};
use crate::random::{compact_sym, rng, smooth_scalar};
use crate::stage::{calibrate_r0, run_stage_chi, run_stage_kallen, StageParams, StageReport};
use crate::stage::chi::calibrate_r0_potential;
use crate::steps::{apply_step, step_identity_residual, Axis, ImmersionPair, StepKind, StepSpec};

use super::config::{ExperimentConfig, R0Spec};
use super::fit::{fit_power_law, PowerFit};
use super::ma::{curl_curl_residual, ma_residual_jet, subsolution_from_f, weak_residual, MaResidual};
use super::plot::{Plot, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    Decompose,
    Step,
    Stage,
    Nk,
    Exponents,
    Sweep,
    MaPipeline,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        f.write_str(&s)
    }
}

/// One named pass/fail measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, bound: f64) -> Check {
        Check { name: name.into(), value, bound, pass: value <= bound }
    }
}

/// One stage run of a sweep (or the single run of `stage`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub label: String,
    pub l: f64,
    pub lambda: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<StageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub fit: PowerFit,
    /// slope +- 2 standard errors
    pub slope_interval: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub command: Command,
    /// sha256 of the canonical configuration (output directory excluded)
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub grid: GridInfo,
    pub points: Vec<PointRecord>,
    pub fits: Vec<FitRecord>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
    /// paths relative to the output directory
    pub artifacts: Vec<String>,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n1: usize,
    pub n2: usize,
    pub h: f64,
    pub margin: usize,
    pub origin: [f64; 2],
}

impl From<&Grid2> for GridInfo {
    fn from(g: &Grid2) -> Self {
        GridInfo { n1: g.n1(), n2: g.n2(), h: g.h(), margin: g.margin(), origin: g.origin() }
    }
}

pub const LEDGER_FILE: &str = "ledger.json";

/// Run state shared by the commands.
struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: &'a Path,
    ledger: RunLedger,
}

impl Run<'_> {
    fn artifact(&mut self, name: String) {
        self.ledger.artifacts.push(name);
    }
    fn field<F: Field>(&mut self, f: &F, stem: &str) -> Result<()> {
        let name = format!("{stem}.macf");
        save_macf1(f, &self.dir.join(&name))?;
        self.artifact(name);
        Ok(())
    }
    fn field_csv<F: Field>(&mut self, f: &F, stem: &str) -> Result<()> {
        let name = format!("{stem}.csv");
        write_csv(f, std::io::BufWriter::new(std::fs::File::create(self.dir.join(&name))?))?;
        self.artifact(name);
        Ok(())
    }
    fn json<T: Serialize>(&mut self, v: &T, name: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), serde_json::to_string_pretty(v)? + "\n")?;
        self.artifact(name.into());
        Ok(())
    }
    fn plot(&mut self, p: &Plot, stem: &str) -> Result<()> {
        for n in p.save(self.dir, stem)? {
            self.artifact(n);
        }
        Ok(())
    }
    fn fit(&mut self, name: &str, xs: Vec<f64>, ys: Vec<f64>) -> Option<PowerFit> {
        let fit = fit_power_law(&xs, &ys).ok()?;
        let w = 2.0 * fit.slope_stderr;
        self.ledger.fits.push(FitRecord {
            name: name.into(),
            xs,
            ys,
            slope_interval: [fit.slope - w, fit.slope + w],
            fit: fit.clone(),
        });
        Some(fit)
    }
}

fn config_hash(cfg: &ExperimentConfig, cmd: Command) -> (String, BTreeMap<String, String>) {
    let mut map = cfg.raw.0.clone();
    map.remove("out");
    map.insert("seed".into(), cfg.seed.to_string());
    let mut h = Sha256::new();
    h.update(cmd.to_string().as_bytes());
    h.update(b"\n");
    for (k, v) in &map {
        h.update(format!("{k} = {v}\n").as_bytes());
    }
    let hex = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    (hex, map)
}

/// Runs `cmd`, writes its artifacts and `ledger.json` under the configured
/// output directory, and returns the ledger. Stage aborts in `stage`, `nk`
/// and `ma-pipeline` are persisted in the ledger and then returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig, cmd: Command) -> Result<RunLedger> {
    let grid = cfg.grid.build()?;
    std::fs::create_dir_all(&cfg.out)?;
    let (config_hash, config) = config_hash(cfg, cmd);
    let mut run = Run {
        cfg,
        dir: &cfg.out,
        ledger: RunLedger {
            command: cmd,
            config_hash,
            seed: cfg.seed,
            config,
            grid: GridInfo::from(&grid),
            points: vec![],
            fits: vec![],
            checks: vec![],
            summary: json!({}),
            artifacts: vec![],
            ok: true,
        },
    };
    let outcome = match cmd {
        Command::Verify => super::verify::run(&mut run.ledger, cfg.seed),
        Command::Decompose => decompose_cmd(&mut run, grid),
        Command::Step => step_cmd(&mut run, grid),
        Command::Stage => stage_cmd(&mut run, grid),
        Command::Nk => nk_cmd(&mut run, grid),
        Command::Exponents => exponents_cmd(&mut run),
        Command::Sweep => sweep_cmd(&mut run, grid),
        Command::MaPipeline => ma_pipeline_cmd(&mut run, grid),
    };
    if let Err(e) = &outcome {
        if e.exit_code() != 3 {
            return Err(outcome.unwrap_err());
        }
        run.ledger.ok = false;
        run.ledger.summary["abort"] = json!(e.to_string());
    }
    run.ledger.ok &= run.ledger.checks.iter().all(|c| c.pass);
    run.ledger.artifacts.push(LEDGER_FILE.into());
    run.ledger.artifacts.sort();
    run.ledger.artifacts.dedup();
    std::fs::write(cfg.out.join(LEDGER_FILE), serde_json::to_string_pretty(&run.ledger)? + "\n")?;
    if let Some(missing) = run.ledger.artifacts.iter().find(|a| !cfg.out.join(a).exists()) {
        return Err(Error::Format(format!("artifact {missing} was not written")));
    }
    outcome.map(|_| run.ledger)
}

/// r0 on the window the stage decomposes on.
fn resolve_r0(cfg: &ExperimentConfig, grid: &Grid2, l: f64, family: Family) -> Result<f64> {
    match cfg.r0 {
        R0Spec::Fixed(r) => Ok(r),
        R0Spec::Auto => {
            let window = Mollifier::new(l, grid.h())?.output_grid(grid)?;
            match family {
                Family::Kallen => calibrate_r0(&window, cfg.stage.gamma, cfg.seed),
                Family::Chi => calibrate_r0_potential(&window, cfg.stage.gamma, cfg.seed),
            }
        }
    }
}

fn stage_once(
    family: Family,
    p: &JetPair,
    a: &SymMatrixField2,
    params: &StageParams,
    k: usize,
) -> Result<(JetPair, StageReport)> {
    match family {
        Family::Kallen => run_stage_kallen(p, a, params),
        Family::Chi => run_stage_chi(p, a, params, k),
    }
}

fn decompose_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let g = grid.full_window();
    let mut r = rng(cfg.seed);
    let e = g.valid_extent();
    let radius = 0.35 * e[0].min(e[1]);
    let newton = NewtonianSolver::new(&g, Quadrature::Corrected);
    let band = default_band(&g);
    let dirichlet = DirichletSolver::new(&g)?;
    let decomp = |d: &SymMatrixField2| match cfg.route {
        Route::Newtonian => newton.decompose(d, band),
        Route::Dirichlet => dirichlet.decompose(d),
    };
    let mut residuals = vec![];
    for s in 0..cfg.samples.max(1) {
        let d = compact_sym(g, &mut r, 4, 3.0, radius);
        let dec = decomp(&d)?;
        let scale = 1.0 + crate::field::sup(&d);
        run.ledger.checks.push(Check::below(&format!("reconstruction[{s}]"), dec.residual_sup / scale, 1e-6));
        residuals.push(dec.residual_sup);
        if s == 0 {
            run.field(&d, "d")?;
            run.field(&dec.a, "a_bar")?;
            run.field(&dec.psi, "psi_bar")?;
            run.field_csv(&dec.a, "a_bar")?;
        }
    }
    let id = decomp(&SymMatrixField2::identity(g, 1.0));
    // the potential route needs compact support, which Id lacks
    if let (Route::Dirichlet, Ok(id)) = (cfg.route, &id) {
        let gap = id.a.values().iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        run.ledger.checks.push(Check::below("a_bar(Id) - 1", gap, 1e-10));
    }
    run.ledger.summary = json!({ "route": cfg.route, "residuals": residuals, "band_nodes": band });
    Ok(())
}

fn step_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let mut r = rng(cfg.seed);
    let g = grid.full_window();
    let k = cfg.problem.k.max(if cfg.step.kind == "spiral" { 4 } else { 1 });
    let amp = smooth_scalar(g, &mut r, 4, 3.0);
    let amp = crate::field::map_field(&amp, |x| 1.0 + 0.25 * x);
    let coeffs: Vec<[f64; 3]> = (0..k)
        .map(|_| {
            let s = smooth_scalar(g, &mut r, 1, 1.0);
            [s.at(0, 0), s.at(1, 1), s.at(2, 2)]
        })
        .collect();
    let v = VectorField2::from_fn(g, k, |c, x, y| {
        let [a, b, e] = coeffs[c];
        0.5 * a * x * x + b * x * y + 0.5 * e * y * y
    });
    let before = ImmersionPair::new(v, VectorField2::zeros(g, 2))?;
    let kind = match cfg.step.kind.as_str() {
        "spiral" => StepKind::Spiral,
        _ => StepKind::Corrugation {
            axis: if cfg.step.axis == 1 { Axis::X1 } else { Axis::X2 },
            component: cfg.step.component,
        },
    };
    g.check_resolution(cfg.step.lambda)?;
    let spec = StepSpec { amplitude: amp.clone(), frequency: cfg.step.lambda, kind };
    let after = apply_step(&before, &spec)?;
    let res = step_identity_residual(&before, &after, &spec)?;
    let a2 = crate::field::cm_norm(&amp, 2)?;
    run.ledger.checks.push(Check::below("step identity / (1 + |a|_2^2)", res / (1.0 + a2 * a2), 1e-5));
    run.field(&amp, "amplitude")?;
    run.field(&after.v, "v")?;
    run.field(&after.w, "w")?;
    run.ledger.summary = json!({ "kind": kind, "lambda": cfg.step.lambda, "residual": res, "a_c2": a2 });
    Ok(())
}

impl ExperimentConfig {
    /// Stage parameters of the `stage` section with r0 resolved on `grid`.
    pub fn stage_params(&self, grid: &Grid2) -> Result<StageParams> {
        stage_params(self, grid, self.stage.l, self.stage.lambda, self.stage.n)
    }
}

fn stage_params(cfg: &ExperimentConfig, grid: &Grid2, l: f64, lambda: f64, n: usize) -> Result<StageParams> {
    let r0 = resolve_r0(cfg, grid, l, cfg.method)?;
    let p = StageParams { l, lambda, n, r0, ..cfg.stage.clone() };
    p.validate()?;
    Ok(p)
}

fn stage_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let a = cfg.problem.target(grid, cfg.seed)?;
    let p = JetPair::zeros(grid, cfg.problem.k)?;
    let params = stage_params(cfg, &grid, cfg.stage.l, cfg.stage.lambda, cfg.stage.n)?;
    let mut point = PointRecord { label: "stage".into(), l: params.l, lambda: params.lambda, n: params.n, report: None, error: None };
    match stage_once(cfg.method, &p, &a, &params, cfg.problem.k) {
        Ok((q, rep)) => {
            run.field(q.v(), "v")?;
            run.field(q.w(), "w")?;
            let d = q.defect(&a)?;
            run.field(&d.d, "defect")?;
            run.field_csv(&d.d, "defect")?;
            run.json(&rep, "stage_report.json")?;
            run.ledger.summary = json!({ "defect_in": rep.defect_in_sup, "defect_out": rep.defect_out_sup });
            point.report = Some(rep);
            run.ledger.points.push(point);
            Ok(())
        }
        Err(e) => {
            point.error = Some(e.to_string());
            run.ledger.points.push(point);
            Err(e)
        }
    }
}

fn sweep_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let a = cfg.problem.target(grid, cfg.seed)?;
    let p = JetPair::zeros(grid, cfg.problem.k)?;
    let mut r0_cache: BTreeMap<u64, f64> = BTreeMap::new();
    let mut defect_series = vec![];
    let mut c2_series = vec![];
    for &l in &cfg.sweep.ls {
        let r0 = match r0_cache.get(&l.to_bits()) {
            Some(r) => *r,
            None => {
                let r = resolve_r0(cfg, &grid, l, cfg.method)?;
                r0_cache.insert(l.to_bits(), r);
                r
            }
        };
        for &n in &cfg.sweep.ns {
            let (mut xs, mut ys, mut c2) = (vec![], vec![], vec![]);
            for &lambda in &cfg.sweep.lambdas {
                let label = format!("l={l} N={n} lambda={lambda}");
                let params = StageParams { l, lambda, n, r0, ..cfg.stage.clone() };
                let outcome = params.validate().and_then(|_| stage_once(cfg.method, &p, &a, &params, cfg.problem.k));
                let mut point = PointRecord { label, l, lambda, n, report: None, error: None };
                match outcome {
                    Ok((_, rep)) => {
                        xs.push(lambda * l);
                        ys.push(rep.defect_out_error_sup);
                        c2.push(rep.v_hessian_sup);
                        run.ledger.checks.push(Check {
                            name: format!("amplitude band, {}", point.label),
                            value: rep.iterations.iter().filter(|i| !i.in_band).count() as f64,
                            bound: 0.0,
                            pass: rep.iterations.iter().all(|i| i.in_band)
                                && rep.codims.iter().all(|c| c.b_in_band),
                        });
                        point.report = Some(rep);
                    }
                    Err(e) if e.exit_code() == 3 => point.error = Some(e.to_string()),
                    Err(e) if matches!(e, Error::Resolution { .. } | Error::InsufficientCollar { .. }) => {
                        point.error = Some(e.to_string())
                    }
                    Err(e) => return Err(e),
                }
                run.ledger.points.push(point);
            }
            let tag = format!("l={l} N={n}");
            let fit = run.fit(&format!("defect vs lambda l, {tag}"), xs.clone(), ys.clone());
            run.fit(&format!("C2 vs lambda l, {tag}"), xs.clone(), c2.clone());
            if let Some(f) = fit {
                run.ledger.checks.push(Check::below(&format!("decay slope, {tag}"), f.slope, -((n as f64) - 1.0)));
            }
            defect_series.push(Series { label: tag.clone(), xs: xs.clone(), ys });
            c2_series.push(Series { label: tag, xs, ys: c2 });
        }
    }
    run.plot(
        &Plot {
            title: "Stage defect (non-target part) against lambda l".into(),
            xlabel: "lambda l".into(),
            ylabel: "sup |D_out - (A - A_l)|".into(),
            logx: true,
            logy: true,
            series: defect_series,
        },
        "defect_vs_lambda",
    )?;
    run.plot(
        &Plot {
            title: "C2 growth against lambda l".into(),
            xlabel: "lambda l".into(),
            ylabel: "sup |D^2 v|".into(),
            logx: true,
            logy: true,
            series: c2_series,
        },
        "c2_vs_lambda",
    )?;
    run.ledger.summary = json!({ "method": cfg.method, "points": run.ledger.points.len() });
    Ok(())
}

fn nk_config(cfg: &ExperimentConfig, grid: &Grid2) -> Result<NkConfig> {
    let r0 = resolve_r0(cfg, grid, cfg.stage.l, cfg.method)?;
    Ok(NkConfig {
        family: cfg.method,
        k: cfg.problem.k,
        stage: StageParams { r0, ..cfg.stage.clone() },
        alpha: cfg.alpha,
        eps: cfg.eps,
        max_iterations: cfg.max_iterations,
        max_preliminary: cfg.max_preliminary,
    })
}

pub const HOLDER_GRID: [f64; 9] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5];

/// Plots and fits shared by `nk` and `ma-pipeline`.
fn nk_artifacts(run: &mut Run, seq: &[JetPair], led: &NkLedger) -> Result<()> {
    run.json(led, "nk_ledger.json")?;
    let defects = led.defect_sequence();
    let idx: Vec<f64> = (0..defects.len()).map(|i| i as f64).collect();
    run.plot(
        &Plot {
            title: "Defect across stages".into(),
            xlabel: "stage".into(),
            ylabel: "sup |D|".into(),
            logx: false,
            logy: true,
            series: vec![Series { label: "defect".into(), xs: idx, ys: defects.clone() }],
        },
        "defect_vs_stage",
    )?;
    let lam: Vec<f64> = led.records.iter().map(|r| r.lambda).collect();
    let c2: Vec<f64> = led.records.iter().map(|r| r.v_hessian_sup).collect();
    run.plot(
        &Plot {
            title: "C2 growth against lambda".into(),
            xlabel: "lambda".into(),
            ylabel: "sup |D^2 v|".into(),
            logx: true,
            logy: true,
            series: vec![Series { label: "v".into(), xs: lam, ys: c2 }],
        },
        "c2_vs_lambda",
    )?;
    let inc: Vec<f64> = led.records.iter().map(|r| r.v_increment_c1).collect();
    let d_in: Vec<f64> = defects[..led.records.len()].to_vec();
    run.fit("v increment C1 vs input defect", d_in, inc);
    if seq.len() >= 3 {
        let h = measure_holder_jets(seq, &HOLDER_GRID)?;
        let series = h
            .gamma_grid
            .iter()
            .zip(&h.seminorms)
            .map(|(g, s)| Series {
                label: format!("gamma={g}"),
                xs: (0..s.len()).map(|i| i as f64).collect(),
                ys: s.clone(),
            })
            .collect();
        run.plot(
            &Plot {
                title: "Holder seminorm of grad v across iterates".into(),
                xlabel: "iterate".into(),
                ylabel: "[grad v]_gamma".into(),
                logx: false,
                logy: true,
                series,
            },
            "holder_vs_iteration",
        )?;
        run.ledger.summary["holder"] = serde_json::to_value(&h)?;
    }
    if let Some(last) = seq.last() {
        run.field(last.v(), "v_final")?;
        run.field(last.w(), "w_final")?;
    }
    Ok(())
}

fn nk_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let a = cfg.problem.target(grid, cfg.seed)?;
    let p = JetPair::zeros(grid, cfg.problem.k)?;
    let ncfg = nk_config(cfg, &grid)?;
    let (seq, led) = run_nash_kuiper(&p, &a, &ncfg)?;
    run.ledger.summary = json!({
        "stages_run": led.stages_run,
        "defects": led.defect_sequence(),
        "truncation": led.truncation,
    });
    nk_artifacts(run, &seq, &led)
}

fn exponents_cmd(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let beta = crate::nk::rational(cfg.problem.beta)?;
    let mut rows = vec![];
    let (mut ks, mut bounds, mut limits) = (vec![], vec![], vec![]);
    for k in 1..=cfg.exponents_kmax.max(1) {
        let family = if k >= 4 { Family::Kallen } else { Family::Chi };
        let bound = exponent_bound_exact(k, &beta, family)?;
        let chi_bound = exponent_bound_exact(k, &beta, Family::Chi)?;
        let rate = rate_budget_exact(cfg.stage.n as u64, k, family)?;
        rows.push(json!({
            "k": k,
            "family": family,
            "exponent_bound": bound.to_string(),
            "chi_exponent_bound": chi_bound.to_string(),
            "n": cfg.stage.n,
            "j": rate.j.to_string(),
            "s": rate.s.to_string(),
            "alpha_max": rate.alpha_max().to_string(),
            "chi_alpha_limit": chi_alpha_limit(k).to_string(),
        }));
        ks.push(k as f64);
        bounds.push(num_traits::ToPrimitive::to_f64(&bound).unwrap_or(f64::NAN));
        limits.push(num_traits::ToPrimitive::to_f64(&chi_alpha_limit(k)).unwrap_or(f64::NAN));
    }
    run.json(&rows, "exponents.json")?;
    run.plot(
        &Plot {
            title: "Exponent thresholds by codimension".into(),
            xlabel: "k".into(),
            ylabel: "alpha".into(),
            logx: false,
            logy: false,
            series: vec![
                Series { label: "exponent bound".into(), xs: ks.clone(), ys: bounds },
                Series { label: "chi limit N -> inf".into(), xs: ks, ys: limits },
            ],
        },
        "exponents",
    )?;
    run.ledger.summary = json!({ "table": rows });
    Ok(())
}

fn ma_pipeline_cmd(run: &mut Run, grid: Grid2) -> Result<()> {
    let cfg = run.cfg;
    let f = cfg.problem.source(grid)?;
    let (pair, a) = subsolution_from_f(&f, cfg.problem.k, cfg.problem.c)?;
    let cc = curl_curl_residual(&a, &f)?;
    run.ledger.checks.push(Check::below("curl curl A + f", cc, 1e-6));
    let min_eig = a.min_eigenvalue();
    run.ledger.checks.push(Check {
        name: "subsolution defect above c".into(),
        value: min_eig,
        bound: cfg.problem.c * (1.0 - 1e-6),
        pass: min_eig > cfg.problem.c * (1.0 - 1e-6),
    });
    run.field(&a, "target")?;
    let p = JetPair::from_pair(&pair)?;
    let ncfg = nk_config(cfg, &grid)?;
    let nk = run_nash_kuiper(&p, &a, &ncfg);
    let (seq, led) = match nk {
        Ok(x) => x,
        Err(e) => {
            run.ledger.summary = json!({ "curl_curl_residual": cc });
            return Err(e);
        }
    };
    let weak: Vec<MaResidual> = seq.iter().map(|q| q.defect(&a).map(|d| weak_residual(&d.d))).collect::<Result<_>>()?;
    let auto: Vec<MaResidual> = seq.iter().map(|q| ma_residual_jet(q, &a, &f)).collect::<Result<_>>()?;
    let values: Vec<f64> = weak.iter().map(|m| m.value).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    run.ledger.checks.push(Check {
        name: "weak residual strictly decreasing".into(),
        value: values.windows(2).filter(|w| w[1] >= w[0]).count() as f64,
        bound: 0.0,
        pass: decreasing && values.len() >= 2,
    });
    run.plot(
        &Plot {
            title: "Weak Monge-Ampere residual across iterates".into(),
            xlabel: "iterate".into(),
            ylabel: "max bank pairing".into(),
            logx: false,
            logy: true,
            series: vec![Series { label: "weak".into(), xs: (0..values.len()).map(|i| i as f64).collect(), ys: values.clone() }],
        },
        "ma_residual",
    )?;
    run.ledger.summary = json!({
        "curl_curl_residual": cc,
        "weak_residuals": weak,
        "residuals": auto,
        "stages_run": led.stages_run,
        "defects": led.defect_sequence(),
        "truncation": led.truncation,
    });
    nk_artifacts(run, &seq, &led)
}

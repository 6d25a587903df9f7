//! Dispatch of experiment kinds onto the core library.

use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use fragwave_core::dislocation::JumpKind;
use fragwave_core::frag_sim::simulate;
use fragwave_core::martingales::{
    estimate_delta, martingale_sample, product_m, truncated_derivative_w, DEFAULT_X_TRUNC,
};
use fragwave_core::replicate::{map_replicates, try_map_replicates};
use fragwave_core::spine::{many_to_one_check, q_large, q_small, PassageSampler};
use fragwave_core::stats::{ks_distance, z_of};
use fragwave_core::stopping_lines::{coming_generation, lln_ratio, sweep_lines};
use fragwave_core::waves::{classify_speed, estimate_wave, fkpp_residuals, l_transform, Grid};
use fragwave_core::{
    DeltaHorizon, DeltaPlan, Error, Seed, SimControls, SpectralProfile, SpeedClass, Summary,
    SweepControls,
};

use crate::config::{parse_grid, Caps, DeltaSpec, ExperimentConfig, Kind, RunConfig};
use crate::report::{evaluate, Cell, Diagnostics, ExperimentReport, RunReport, Table, Value};

/// Command-line overrides of the config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Worker count: explicit override, then the config, then all cores.
pub fn resolve_workers(config: &RunConfig, opts: &RunOptions) -> usize {
    opts.workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run(config: &RunConfig, opts: &RunOptions) -> anyhow::Result<RunReport> {
    config.validate()?;
    let master_seed = opts.seed.unwrap_or(config.master_seed);
    let workers = resolve_workers(config, opts);
    if workers == 0 {
        bail!("workers: must be at least 1");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the worker pool")?;
    let experiments = pool.install(|| {
        config
            .experiments
            .iter()
            .map(|e| run_experiment(e, master_seed))
            .collect()
    });
    Ok(RunReport {
        config: config.clone(),
        master_seed,
        workers,
        experiments,
    })
}

#[derive(Default)]
struct Output {
    cells: Vec<Cell>,
    tables: Vec<Table>,
    diag: Diagnostics,
}

struct Ctx<'a> {
    e: &'a ExperimentConfig,
    prof: &'a SpectralProfile,
    seed: Seed,
    master: u64,
}

pub fn run_experiment(e: &ExperimentConfig, master_seed: u64) -> ExperimentReport {
    let start = Instant::now();
    let mut out = Output::default();
    let profile = e.measure.build().and_then(|m| match e.quadrature_nodes {
        Some(n) => SpectralProfile::with_nodes(m, n),
        None => SpectralProfile::new(m),
    });
    let error = match &profile {
        Err(err) => Some(format!("measure: {err}")),
        Ok(prof) => {
            let ctx = Ctx {
                e,
                prof,
                seed: Seed::new(master_seed),
                master: master_seed,
            };
            dispatch(&ctx, &mut out).err().map(|err| format!("{err:#}"))
        }
    };
    let wall = start.elapsed().as_secs_f64();
    out.diag.wall_seconds = wall;
    out.cells.push(Cell::new("wall_seconds", wall));
    let checks = match &profile {
        Ok(prof) => e
            .checks
            .iter()
            .map(|c| evaluate(c, &out.cells, prof))
            .collect(),
        Err(_) => Vec::new(),
    };
    ExperimentReport {
        name: e.name.clone(),
        kind: e.kind.name().to_string(),
        cells: out.cells,
        checks,
        tables: out.tables,
        diagnostics: out.diag,
        error,
    }
}

fn dispatch(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    match ctx.e.kind {
        Kind::Exponents => exponents(ctx, out),
        Kind::Simulate => simulate_kind(ctx, out),
        Kind::Martingale => martingale(ctx, out),
        Kind::Line => line(ctx, out),
        Kind::Lln => lln(ctx, out),
        Kind::Wave => wave(ctx, out),
        Kind::Residual => residual(ctx, out),
        Kind::Speed => speed(ctx, out),
        Kind::ManyToOne => many_to_one(ctx, out),
    }
}

impl Ctx<'_> {
    fn ps(&self) -> anyhow::Result<Vec<f64>> {
        let mut ps = Vec::new();
        for (k, p) in self.e.p.iter().enumerate() {
            ps.push(
                p.resolve(self.prof)
                    .ok_or_else(|| anyhow!("p[{k}]: unknown symbol"))?,
            );
        }
        if let Some(g) = &self.e.p_grid {
            ps.extend(parse_grid(g).map_err(|m| anyhow!("p_grid: {m}"))?);
        }
        Ok(ps)
    }

    fn replicates(&self) -> usize {
        self.e.replicates.unwrap_or(1)
    }

    fn sim(&self) -> SimControls {
        sim_controls(&self.e.caps)
    }

    fn sweep(&self) -> SweepControls {
        let d = SweepControls::default();
        SweepControls {
            max_splits: self.e.caps.max_splits.unwrap_or(d.max_splits),
            max_frozen: self.e.caps.max_frozen.unwrap_or(d.max_frozen),
        }
    }

    fn grid(&self) -> Option<Grid> {
        self.e.grid.as_ref().map(Grid::from)
    }
}

fn sim_controls(caps: &Caps) -> SimControls {
    let d = SimControls::default();
    SimControls {
        max_fragments: caps.max_fragments.unwrap_or(d.max_fragments),
        size_floor: caps.size_floor.unwrap_or(d.size_floor),
        lineage_drift: None,
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn is_cap(err: &Error) -> bool {
    matches!(err, Error::FragmentCap { .. })
}

fn exponents(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let (pl, pb, cb) = (prof.p_lower(), prof.p_bar(), prof.c_bar());
    out.cells.push(Cell::new("p_lower", pl));
    out.cells.push(Cell::new("p_bar", pb));
    out.cells.push(Cell::new("c_bar", cb));
    let mut crit = Table::new("critical", &["p_lower", "p_bar", "c_bar"]);
    crit.push(vec![pl.into(), pb.into(), cb.into()]);

    let mut t = Table::new("exponents", &["p", "phi", "phi_prime", "c_p", "eta"]);
    let mut fixture_error: Option<f64> = None;
    for p in ctx.ps()? {
        if p <= pl {
            out.diag.notes.push(format!(
                "p = {p} is not above the lower exponent {pl}; skipped"
            ));
            continue;
        }
        let phi = prof.phi(p).with_context(|| format!("phi at p = {p}"))?;
        let dphi = prof.phi_prime(p)?;
        let c = prof.wave_speed(p).ok();
        let eta = if p > 0.0 && p <= pb * (1.0 + 1e-12) {
            Some(prof.eta_root(p)?)
        } else {
            None
        };
        if let Some(exact) = ctx.e.measure.closed_form_phi(p) {
            let err = (phi - exact).abs();
            fixture_error = Some(fixture_error.map_or(err, |e| e.max(err)));
        }
        out.cells.push(Cell::new("phi", phi).param("p", p));
        out.cells.push(Cell::new("phi_prime", dphi).param("p", p));
        if let Some(c) = c {
            out.cells.push(Cell::new("c_p", c).param("p", p));
        }
        if let Some(eta) = eta {
            out.cells.push(Cell::new("eta", eta).param("p", p));
        }
        t.push(vec![
            p.into(),
            phi.into(),
            dphi.into(),
            c.into(),
            eta.into(),
        ]);
    }
    if let Some(err) = fixture_error {
        out.cells
            .push(Cell::new("phi_closed_form_error", err).with_n(t.rows.len()));
    }
    out.tables.push(crit);
    out.tables.push(t);
    Ok(())
}

struct SimRun {
    rows: Vec<[f64; 4]>,
    slope: Option<f64>,
    fragments: u64,
}

fn simulate_kind(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let e = ctx.e;
    let horizon = e.horizon.expect("validated");
    let ts = if e.t.is_empty() {
        vec![horizon]
    } else {
        sorted(&e.t)
    };
    let step = e.step.unwrap_or(0.1);
    let controls = ctx.sim();
    let runs: Vec<SimRun> =
        try_map_replicates(ctx.replicates(), |i| -> fragwave_core::Result<SimRun> {
            let traj = simulate(
                ctx.prof.measure(),
                horizon,
                ctx.seed.replicate(i),
                &controls,
            )?;
            let mut rows = Vec::with_capacity(ts.len());
            for &t in &ts {
                let s = traj.snapshot_at(t)?;
                rows.push([s.len() as f64, s.min_x(), s.total_mass(), s.dropped_mass]);
            }
            let slope = match e.window {
                Some([t0, t1]) => Some(fragwave_core::frag_sim::largest_fragment_speed(
                    std::slice::from_ref(&traj),
                    t0,
                    t1,
                    step,
                )?),
                None => None,
            };
            Ok(SimRun {
                rows,
                slope,
                fragments: traj.fragments().len() as u64,
            })
        })?;

    let mut table = Table::new(
        "trajectories",
        &[
            "run_id",
            "seed",
            "t",
            "n_alive",
            "min_x",
            "sum_mass",
            "dropped_mass",
        ],
    );
    let mut mass_error = 0.0f64;
    for (i, r) in runs.iter().enumerate() {
        for (&t, row) in ts.iter().zip(&r.rows) {
            mass_error = mass_error.max((row[2] + row[3] - 1.0).abs());
            table.push(vec![
                i.into(),
                ctx.master.into(),
                t.into(),
                (row[0] as u64).into(),
                row[1].into(),
                row[2].into(),
                row[3].into(),
            ]);
        }
    }
    for (j, &t) in ts.iter().enumerate() {
        let n: Vec<f64> = runs.iter().map(|r| r.rows[j][0]).collect();
        out.cells.push(Cell::mean_of("n_alive", &n).param("t", t));
        let m: Vec<f64> = runs.iter().map(|r| r.rows[j][1]).collect();
        out.cells.push(Cell::mean_of("min_x", &m).param("t", t));
    }
    out.cells
        .push(Cell::new("mass_error", mass_error).with_n(runs.len()));
    if let Some([t0, t1]) = e.window {
        let slopes: Vec<f64> = runs.iter().filter_map(|r| r.slope).collect();
        out.cells.push(
            Cell::mean_of("speed", &slopes)
                .param("t0", t0)
                .param("t1", t1),
        );
    }
    out.diag.fragments = runs.iter().map(|r| r.fragments).sum();
    out.tables.push(table);
    Ok(())
}

/// One replicate of the `martingale` kind at one `(p, t)`.
struct MartRec {
    w: f64,
    dw: Option<f64>,
    dw_trunc: Vec<f64>,
    bias: f64,
    n_alive: usize,
    dropped: f64,
}

fn martingale(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let ps = ctx.ps()?;
    let ts = sorted(&ctx.e.t);
    let horizon = *ts.last().unwrap();
    let any_critical = ps.iter().any(|&p| prof.is_critical(p));
    let xs: Vec<f64> = if !ctx.e.x.is_empty() {
        ctx.e.x.clone()
    } else if any_critical {
        vec![ctx.e.x_trunc.unwrap_or(DEFAULT_X_TRUNC)]
    } else {
        Vec::new()
    };
    let mut controls = ctx.sim();
    if any_critical {
        controls = controls.with_lineage_drift(prof.c_bar());
    }
    // runs[i][j][k]: replicate i, time j, exponent k.
    let runs: Vec<(u64, Vec<Vec<MartRec>>)> =
        try_map_replicates(ctx.replicates(), |i| -> fragwave_core::Result<_> {
            let traj = simulate(prof.measure(), horizon, ctx.seed.replicate(i), &controls)?;
            let mut by_t = Vec::with_capacity(ts.len());
            for &t in &ts {
                let mut by_p = Vec::with_capacity(ps.len());
                for &p in &ps {
                    let x0 = xs.first().copied().unwrap_or(DEFAULT_X_TRUNC);
                    let s = martingale_sample(prof, &traj, p, t, x0)?;
                    let mut dw_trunc = Vec::new();
                    if let Some(first) = s.dw_trunc {
                        dw_trunc.push(first);
                        for &x in &xs[1..] {
                            dw_trunc.push(truncated_derivative_w(prof, &traj, p, x, t)?);
                        }
                    }
                    by_p.push(MartRec {
                        w: s.w,
                        dw: s.dw,
                        dw_trunc,
                        bias: s.truncation_bias_bound,
                        n_alive: s.n_alive,
                        dropped: s.dropped_mass,
                    });
                }
                by_t.push(by_p);
            }
            Ok((traj.fragments().len() as u64, by_t))
        })?;

    let mut table = Table::new(
        "martingales",
        &[
            "run_id",
            "p",
            "t",
            "x_trunc",
            "W",
            "dW",
            "dW_trunc",
            "n_alive",
            "dropped_mass",
        ],
    );
    for (i, (_, by_t)) in runs.iter().enumerate() {
        for (j, &t) in ts.iter().enumerate() {
            for (k, &p) in ps.iter().enumerate() {
                let r = &by_t[j][k];
                let base = |x: Value, dt: Value| {
                    vec![
                        i.into(),
                        p.into(),
                        t.into(),
                        x,
                        r.w.into(),
                        r.dw.into(),
                        dt,
                        r.n_alive.into(),
                        r.dropped.into(),
                    ]
                };
                if r.dw_trunc.is_empty() {
                    table.push(base(Value::Empty, Value::Empty));
                } else {
                    for (&x, &d) in xs.iter().zip(&r.dw_trunc) {
                        table.push(base(x.into(), d.into()));
                    }
                }
            }
        }
    }
    for (j, &t) in ts.iter().enumerate() {
        for (k, &p) in ps.iter().enumerate() {
            let recs: Vec<&MartRec> = runs.iter().map(|(_, r)| &r[j][k]).collect();
            let w: Vec<f64> = recs.iter().map(|r| r.w).collect();
            out.cells
                .push(Cell::mean_of("W", &w).param("p", p).param("t", t));
            let bias = recs.iter().map(|r| r.bias).fold(0.0, f64::max);
            out.cells.push(
                Cell::new("truncation_bias_bound", bias)
                    .param("p", p)
                    .param("t", t),
            );
            if recs[0].dw.is_some() {
                let dw: Vec<f64> = recs.iter().filter_map(|r| r.dw).collect();
                out.cells
                    .push(Cell::mean_of("dW", &dw).param("p", p).param("t", t));
            }
            for (m, &x) in xs.iter().enumerate() {
                if recs[0].dw_trunc.len() <= m {
                    break;
                }
                let d: Vec<f64> = recs.iter().map(|r| r.dw_trunc[m]).collect();
                let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                out.cells.push(
                    Cell::mean_of("dW_trunc", &d)
                        .param("p", p)
                        .param("t", t)
                        .param("x", x),
                );
                out.cells.push(
                    Cell::new("dW_trunc_min", min)
                        .param("p", p)
                        .param("t", t)
                        .param("x", x),
                );
            }
        }
    }
    out.diag.fragments = runs.iter().map(|r| r.0).sum();
    out.tables.push(table);
    Ok(())
}

#[derive(Clone, Default)]
struct LevelAcc {
    w: f64,
    mass: f64,
    frozen: u64,
    max_t: f64,
    /// `Σ y_i 1{ℓ_i ≤ T}` for each freeze horizon `T`.
    early: Vec<f64>,
}

struct SweepOut {
    levels: Vec<LevelAcc>,
    splits: u64,
    /// `(level, x, freeze_time, distance, weight)`.
    fragments: Vec<(usize, f64, f64, f64, f64)>,
}

fn line(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let e = ctx.e;
    let ps = ctx.ps()?;
    let zs = e.z.clone();
    let controls = ctx.sweep();
    let keep = e.fragment_rows;
    let horizons = sorted(&e.freeze_horizons);

    let mut levels = Table::new(
        "levels",
        &[
            "sweep_id",
            "p",
            "z",
            "capped",
            "frozen",
            "W",
            "mass_error",
            "max_freeze_time",
            "splits",
        ],
    );
    let mut frags = Table::new(
        "fragments",
        &["sweep_id", "p", "z", "i", "x", "freeze_time", "d", "y"],
    );
    for &p in &ps {
        let sweeps: Vec<Option<SweepOut>> =
            try_map_replicates(ctx.replicates(), |i| -> fragwave_core::Result<_> {
                let early = vec![0.0; horizons.len()];
                let mut acc = vec![
                    LevelAcc {
                        early,
                        ..LevelAcc::default()
                    };
                    zs.len()
                ];
                let mut fragments = Vec::new();
                let res = sweep_lines(
                    prof,
                    p,
                    &zs,
                    &mut ctx.seed.replicate(i).rng(),
                    &controls,
                    |k, f, _| {
                        let a = &mut acc[k];
                        a.w += f.weight;
                        a.mass += (-f.x).exp();
                        a.frozen += 1;
                        a.max_t = a.max_t.max(f.freeze_time);
                        for (s, &t) in a.early.iter_mut().zip(&horizons) {
                            if f.freeze_time <= t {
                                *s += f.weight;
                            }
                        }
                        if keep {
                            if a.frozen as usize > controls.max_frozen {
                                return Err(Error::FragmentCap {
                                    cap: controls.max_frozen,
                                    time: f.freeze_time,
                                    alive: a.frozen as usize,
                                    events: 0,
                                    dropped_mass: 0.0,
                                });
                            }
                            fragments.push((k, f.x, f.freeze_time, f.distance, f.weight));
                        }
                        Ok(())
                    },
                );
                match res {
                    Ok(stats) => Ok(Some(SweepOut {
                        levels: acc,
                        splits: stats.splits,
                        fragments,
                    })),
                    Err(err) if is_cap(&err) => Ok(None),
                    Err(err) => Err(err),
                }
            })?;
        let capped = sweeps.iter().filter(|s| s.is_none()).count();
        out.diag.capped += capped as u64;
        out.cells.push(
            Cell::new("capped", capped as f64)
                .param("p", p)
                .with_n(sweeps.len()),
        );
        if capped > 0 {
            out.diag.notes.push(format!(
                "p = {p}: {capped} sweeps hit a cap and were excluded"
            ));
        }
        for (i, s) in sweeps.iter().enumerate() {
            for (k, &z) in zs.iter().enumerate() {
                match s {
                    Some(s) => {
                        let a = &s.levels[k];
                        levels.push(vec![
                            i.into(),
                            p.into(),
                            z.into(),
                            0u64.into(),
                            a.frozen.into(),
                            a.w.into(),
                            (a.mass - 1.0).abs().into(),
                            a.max_t.into(),
                            s.splits.into(),
                        ]);
                    }
                    None => {
                        let mut row = vec![i.into(), p.into(), z.into(), 1u64.into()];
                        row.extend(std::iter::repeat_n(Value::Empty, 5));
                        levels.push(row);
                    }
                }
            }
            if let Some(s) = s {
                let mut idx = vec![0u64; zs.len()];
                for &(k, x, ft, d, y) in &s.fragments {
                    frags.push(vec![
                        i.into(),
                        p.into(),
                        zs[k].into(),
                        idx[k].into(),
                        x.into(),
                        ft.into(),
                        d.into(),
                        y.into(),
                    ]);
                    idx[k] += 1;
                }
            }
        }
        let done: Vec<&SweepOut> = sweeps.iter().flatten().collect();
        out.diag.fragments += done
            .iter()
            .flat_map(|s| s.levels.iter().map(|a| a.frozen))
            .sum::<u64>();
        for (k, &z) in zs.iter().enumerate() {
            if done.is_empty() {
                break;
            }
            let w: Vec<f64> = done.iter().map(|s| s.levels[k].w).collect();
            out.cells
                .push(Cell::mean_of("W_line", &w).param("p", p).param("z", z));
            let n: Vec<f64> = done.iter().map(|s| s.levels[k].frozen as f64).collect();
            out.cells
                .push(Cell::mean_of("frozen", &n).param("p", p).param("z", z));
            let me = done
                .iter()
                .map(|s| (s.levels[k].mass - 1.0).abs())
                .fold(0.0, f64::max);
            out.cells
                .push(Cell::new("mass_error", me).param("p", p).param("z", z));
        }
        if !horizons.is_empty() && !done.is_empty() {
            truncated_identity(ctx, p, &zs, &horizons, &done, out)?;
        }
        if e.coming_generation && p > 0.0 {
            coming(ctx, p, &controls, out)?;
        }
        if let (Some(m), true) = (e.overshoot_samples, p > 0.0) {
            overshoot(ctx, p, m, out)?;
        }
    }
    out.tables.push(levels);
    if keep {
        out.tables.push(frags);
    }
    Ok(())
}

/// `E Σ y_i 1{ℓ_i ≤ T}` over the sweeps against `P^{(p)}(τ_z ≤ T)` from
/// as many spine passages.
fn truncated_identity(
    ctx: &Ctx,
    p: f64,
    zs: &[f64],
    horizons: &[f64],
    done: &[&SweepOut],
    out: &mut Output,
) -> anyhow::Result<()> {
    let sampler = PassageSampler::new(ctx.prof, p)?;
    for (k, &z) in zs.iter().enumerate() {
        let taus = map_replicates(done.len(), |i| {
            sampler
                .sample(z, &mut ctx.seed.tagged(4 + k as u64, i).rng())
                .tau
        });
        for (j, &t) in horizons.iter().enumerate() {
            let tree = Summary::of(
                &done
                    .iter()
                    .map(|s| s.levels[k].early[j])
                    .collect::<Vec<_>>(),
            );
            let hit: Vec<f64> = taus
                .iter()
                .map(|tau| f64::from(u8::from(tau.is_some_and(|v| v <= t))))
                .collect();
            let spine = Summary::of(&hit);
            let se = (tree.se * tree.se + spine.se * spine.se).sqrt();
            let keyed = |c: Cell| c.param("p", p).param("z", z).param("T", t);
            out.cells
                .push(keyed(Cell::from_summary("W_line_early", &tree)));
            out.cells
                .push(keyed(Cell::from_summary("passage_probability", &spine)));
            out.cells.push(keyed(Cell::new(
                "truncated_z",
                z_of(tree.mean - spine.mean, se, spine.mean).abs(),
            )));
        }
    }
    Ok(())
}

fn coming(ctx: &Ctx, p: f64, controls: &SweepControls, out: &mut Output) -> anyhow::Result<()> {
    let rows: Vec<Option<[f64; 4]>> = try_map_replicates(ctx.replicates(), |i| {
        match coming_generation(ctx.prof, p, ctx.seed.tagged(1, i), controls) {
            Ok(d) => {
                let w = |v: f64| (-(p + 1.0) * v).exp();
                let m: f64 = d.iter().map(|&v| w(v)).sum();
                let t: f64 = d.iter().map(|&v| w(v) * v).sum();
                let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                Ok(Some([m, t, d.len() as f64, min]))
            }
            Err(err) if is_cap(&err) => Ok(None),
            Err(err) => Err(err),
        }
    })?;
    let mut table = Table::new(
        "coming_generation",
        &[
            "sweep_id",
            "p",
            "malthusian",
            "tilted",
            "points",
            "min_distance",
        ],
    );
    for (i, r) in rows.iter().enumerate() {
        match r {
            Some(r) => table.push(vec![
                i.into(),
                p.into(),
                r[0].into(),
                r[1].into(),
                (r[2] as u64).into(),
                r[3].into(),
            ]),
            None => table.push(vec![
                i.into(),
                p.into(),
                Value::Empty,
                Value::Empty,
                Value::Empty,
                Value::Empty,
            ]),
        }
    }
    let done: Vec<&[f64; 4]> = rows.iter().flatten().collect();
    let pick = |j: usize| done.iter().map(|r| r[j]).collect::<Vec<f64>>();
    out.cells
        .push(Cell::mean_of("malthusian", &pick(0)).param("p", p));
    out.cells
        .push(Cell::mean_of("tilted_mean", &pick(1)).param("p", p));
    let min = pick(3).into_iter().fold(f64::INFINITY, f64::min);
    out.cells.push(Cell::new("min_distance", min).param("p", p));
    merge_table(out, table);
    Ok(())
}

fn overshoot(ctx: &Ctx, p: f64, m: usize, out: &mut Output) -> anyhow::Result<()> {
    let sampler = PassageSampler::new(ctx.prof, p)?;
    let passages = map_replicates(m, |i| sampler.sample(0.0, &mut ctx.seed.tagged(2, i).rng()));
    let mut table = Table::new("passages", &["seed", "p", "z", "tau", "overshoot"]);
    for fp in &passages {
        table.push(vec![
            ctx.master.into(),
            p.into(),
            0.0.into(),
            fp.tau.into(),
            fp.overshoot.into(),
        ]);
    }
    let seen: Vec<f64> = passages
        .iter()
        .filter(|f| f.observed())
        .map(|f| f.overshoot)
        .collect();
    out.cells.push(
        Cell::new("unobserved", (m - seen.len()) as f64)
            .param("p", p)
            .with_n(m),
    );
    out.cells
        .push(Cell::mean_of("overshoot_mean", &seen).param("p", p));
    if let JumpKind::Exponential { decay, .. } = sampler.law().kind() {
        let b = *decay;
        let ks = ks_distance(&seen, |x| -(-b * x).exp_m1());
        out.cells.push(
            Cell::new("overshoot_ks", ks)
                .param("p", p)
                .with_n(seen.len()),
        );
    }
    merge_table(out, table);
    Ok(())
}

/// Appends rows to an existing table of the same name.
fn merge_table(out: &mut Output, table: Table) {
    match out.tables.iter_mut().find(|t| t.name == table.name) {
        Some(t) => t.rows.extend(table.rows),
        None => out.tables.push(table),
    }
}

fn lln(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let f = ctx.e.functional.as_ref().expect("validated").build()?;
    let controls = ctx.sweep();
    let mut table = Table::new(
        "sweeps",
        &[
            "sweep_id",
            "p",
            "z",
            "capped",
            "numerator",
            "line_W",
            "ratio",
            "frozen",
            "splits",
        ],
    );
    for p in ctx.ps()? {
        let theory = if p <= 0.0 {
            let q = q_small(prof, p, &f)?;
            Cell::new("q_theory", q.value).param("p", p)
        } else {
            let q = q_large(prof, p, &f, 20_000, ctx.seed.tagged(3, 0))?;
            Cell::new("q_theory", q.value)
                .param("p", p)
                .with_se(q.se)
                .with_n(q.n)
        };
        out.cells.push(theory);
        for &z in &ctx.e.z {
            let rows = try_map_replicates(ctx.replicates(), |i| {
                match lln_ratio(prof, p, z, &f, ctx.seed.replicate(i), &controls) {
                    Ok(r) => Ok(Some(r)),
                    Err(err) if is_cap(&err) => Ok(None),
                    Err(err) => Err(err),
                }
            })?;
            for (i, r) in rows.iter().enumerate() {
                let mut row = vec![i.into(), p.into(), z.into()];
                match r {
                    Some(r) => row.extend([
                        0u64.into(),
                        r.numerator.into(),
                        r.line_w.into(),
                        r.ratio.into(),
                        r.frozen.into(),
                        r.splits.into(),
                    ]),
                    None => {
                        row.push(1u64.into());
                        row.extend(std::iter::repeat_n(Value::Empty, 5));
                    }
                }
                table.push(row);
            }
            let done: Vec<_> = rows.iter().flatten().collect();
            let capped = rows.len() - done.len();
            out.diag.capped += capped as u64;
            out.diag.fragments += done.iter().map(|r| r.frozen).sum::<u64>();
            out.cells.push(
                Cell::new("capped", capped as f64)
                    .param("p", p)
                    .param("z", z),
            );
            if done.is_empty() {
                continue;
            }
            let num = Summary::of(&done.iter().map(|r| r.numerator).collect::<Vec<_>>());
            let ratio = Summary::of(&done.iter().map(|r| r.ratio).collect::<Vec<_>>());
            out.cells.push(
                Cell::from_summary("numerator", &num)
                    .param("p", p)
                    .param("z", z),
            );
            out.cells.push(
                Cell::from_summary("ratio", &ratio)
                    .param("p", p)
                    .param("z", z),
            );
            out.cells.push(
                Cell::new("numerator_median", num.median)
                    .param("p", p)
                    .param("z", z)
                    .with_n(num.n),
            );
            out.cells.push(
                Cell::new("ratio_median", ratio.median)
                    .param("p", p)
                    .param("z", z)
                    .with_n(ratio.n),
            );
        }
    }
    out.tables.push(table);
    Ok(())
}

fn single_p(ctx: &Ctx) -> anyhow::Result<f64> {
    ctx.ps()?
        .first()
        .copied()
        .ok_or_else(|| anyhow!("p: exactly one value required"))
}

fn wave(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let e = ctx.e;
    let p = single_p(ctx)?;
    let critical = prof.is_critical(p);
    let horizon = match e.delta.as_ref().expect("validated") {
        DeltaSpec::Time(t) => Some(DeltaHorizon::Time(*t)),
        DeltaSpec::Line(z) => Some(DeltaHorizon::Line(*z)),
        DeltaSpec::Constant => None,
    };
    let values: Vec<f64> = match horizon {
        None => vec![
            1.0;
            ctx.e
                .replicates
                .unwrap_or(fragwave_core::waves::MIN_DELTA_SAMPLES)
        ],
        Some(h) => {
            let mut plan = DeltaPlan::new(h, ctx.replicates(), ctx.seed);
            plan.sim = ctx.sim();
            plan.sweep = ctx.sweep();
            if let Some(x) = e.x_trunc {
                plan.x_trunc = x;
            }
            let samples = estimate_delta(prof, p, &plan)?;
            let mut table = Table::new(
                "delta",
                &["i", "value", "half_value", "diagnostic", "fragments"],
            );
            for (i, s) in samples.iter().enumerate() {
                table.push(vec![
                    i.into(),
                    s.value.into(),
                    s.half_value.into(),
                    s.diagnostic().into(),
                    s.fragments.into(),
                ]);
            }
            out.tables.push(table);
            let diag: Vec<f64> = samples.iter().map(|s| s.diagnostic()).collect();
            out.cells
                .push(Cell::mean_of("horizon_diagnostic", &diag).param("p", p));
            out.diag.fragments = samples.iter().map(|s| s.fragments).sum();
            let v: Vec<f64> = samples.iter().map(|s| s.value).collect();
            out.cells.push(Cell::mean_of("delta", &v).param("p", p));
            v
        }
    };
    let wave = estimate_wave(&values, p, ctx.grid())?;
    let psi = wave.values();
    let monotone = psi.windows(2).all(|w| w[1] >= w[0]);
    out.cells
        .push(Cell::new("psi_monotone", f64::from(u8::from(monotone))).param("p", p));

    let l = match l_transform(&wave, critical) {
        Ok(l) => {
            out.cells.push(Cell::new("L_monotone", 1.0).param("p", p));
            out.cells.push(Cell::new("k", l.k).param("p", p));
            Some(l)
        }
        Err(err @ Error::NotMonotoneL { .. }) => {
            out.cells.push(Cell::new("L_monotone", 0.0).param("p", p));
            out.diag.notes.push(err.to_string());
            None
        }
        Err(err) => return Err(err.into()),
    };

    let xs = wave.xs();
    let central = wave.central_half();
    let cx = &xs[central.clone()];
    let c = prof.wave_speed(p)?;
    let res = fkpp_residuals(&wave, prof, cx, c)?;
    let abs_max = res.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    let z_max = res
        .iter()
        .map(|r| z_of(r.value, r.se, 1.0).abs())
        .fold(0.0, f64::max);
    let bound = res.iter().map(|r| 4.0 * r.se).fold(0.0, f64::max);
    out.cells.push(
        Cell::new("residual_abs_max", abs_max)
            .param("p", p)
            .with_n(res.len()),
    );
    out.cells.push(
        Cell::new("residual_z_max", z_max)
            .param("p", p)
            .with_n(res.len()),
    );
    out.cells
        .push(Cell::new("residual_bound_max", bound).param("p", p));
    let wrong = if let Some(off) = e.wrong_speed_offset {
        let cw = prof.c_bar() + off;
        let rw = fkpp_residuals(&wave, prof, cx, cw)?;
        let wmax = rw.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
        out.cells.push(
            Cell::new("wrong_speed_ratio", wmax / abs_max)
                .param("p", p)
                .param("c", cw),
        );
        Some(rw)
    } else {
        None
    };

    let mut table = Table::new(
        "wave",
        &[
            "x",
            "psi",
            "se",
            "L",
            "residual_at_matched_speed",
            "residual_se",
            "residual_at_wrong_speed",
        ],
    );
    for (j, &x) in xs.iter().enumerate() {
        let inner = central.contains(&j).then(|| j - central.start);
        table.push(vec![
            x.into(),
            psi[j].into(),
            wave.se()[j].into(),
            l.as_ref().map(|l| l.values[j]).into(),
            inner.map(|k| res[k].value).into(),
            inner.map(|k| res[k].se).into(),
            inner
                .and_then(|k| wrong.as_ref().map(|w| w[k].value))
                .into(),
        ]);
    }
    out.tables.push(table);

    if let (Some(m), false) = (e.product_runs, e.t.is_empty()) {
        product_check(ctx, &wave, p, c, m, out)?;
    }
    Ok(())
}

/// `E M(t, p, x)` against `ψ̂(x)` at grid points nearest to the configured `x`.
fn product_check(
    ctx: &Ctx,
    wave: &fragwave_core::WaveFunction,
    p: f64,
    c: f64,
    m: usize,
    out: &mut Output,
) -> anyhow::Result<()> {
    let ts = sorted(&ctx.e.t);
    let horizon = *ts.last().unwrap();
    let xs = wave.xs();
    let js: Vec<usize> = if ctx.e.x.is_empty() {
        let r = wave.central_half();
        vec![r.start, (r.start + r.end) / 2, r.end - 1]
    } else {
        ctx.e
            .x
            .iter()
            .map(|&x| {
                (0..xs.len())
                    .min_by(|&a, &b| (xs[a] - x).abs().total_cmp(&(xs[b] - x).abs()))
                    .unwrap()
            })
            .collect()
    };
    let controls = ctx.sim();
    let psi = |y: f64| wave.psi(y).max(f64::MIN_POSITIVE);
    let runs: Vec<Vec<f64>> = try_map_replicates(m, |i| -> fragwave_core::Result<_> {
        let traj = simulate(
            ctx.prof.measure(),
            horizon,
            ctx.seed.tagged(2, i),
            &controls,
        )?;
        let mut v = Vec::with_capacity(ts.len() * js.len());
        for &t in &ts {
            let snap = traj.snapshot_at(t)?;
            for &j in &js {
                v.push(product_m(&snap, psi, c, xs[j])?);
            }
        }
        Ok(v)
    })?;
    let mut table = Table::new(
        "product",
        &["t", "x", "mean_M", "se_M", "psi", "se_psi", "z"],
    );
    for (a, &t) in ts.iter().enumerate() {
        for (b, &j) in js.iter().enumerate() {
            let col: Vec<f64> = runs.iter().map(|r| r[a * js.len() + b]).collect();
            let s = Summary::of(&col);
            let (target, se_t) = (wave.values()[j], wave.se()[j]);
            let se = (s.se * s.se + se_t * se_t).sqrt();
            let z = z_of(s.mean - target, se, target);
            let x = xs[j];
            out.cells.push(
                Cell::from_summary("product_mean", &s)
                    .param("p", p)
                    .param("t", t)
                    .param("x", x),
            );
            out.cells.push(
                Cell::new("product_z", z.abs())
                    .param("p", p)
                    .param("t", t)
                    .param("x", x)
                    .with_n(m),
            );
            table.push(vec![
                t.into(),
                x.into(),
                s.mean.into(),
                s.se.into(),
                target.into(),
                se_t.into(),
                z.into(),
            ]);
        }
    }
    out.tables.push(table);
    Ok(())
}

fn residual(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let p = single_p(ctx)?;
    let cs: Vec<f64> = if ctx.e.c.is_empty() {
        vec![prof.wave_speed(p)?]
    } else {
        ctx.e
            .c
            .iter()
            .map(|c| c.resolve(prof).ok_or_else(|| anyhow!("c: unknown symbol")))
            .collect::<anyhow::Result<_>>()?
    };
    let n = ctx
        .e
        .replicates
        .unwrap_or(fragwave_core::waves::MIN_DELTA_SAMPLES);
    let wave = estimate_wave(&vec![1.0; n], p, ctx.grid())?;
    let xs = &wave.xs()[2..wave.xs().len() - 2];
    let mut table = Table::new("residual", &["c", "x", "psi", "residual"]);
    for &c in &cs {
        let res = fkpp_residuals(&wave, prof, xs, c)?;
        for r in &res {
            table.push(vec![
                c.into(),
                r.x.into(),
                wave.psi_exact(r.x).into(),
                r.value.into(),
            ]);
        }
        let m = res.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
        out.cells.push(
            Cell::new("residual_abs_max", m)
                .param("p", p)
                .param("c", c)
                .with_n(res.len()),
        );
    }
    out.tables.push(table);
    Ok(())
}

fn speed(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let mut table = Table::new("speeds", &["c", "class", "p"]);
    for (k, c) in ctx.e.c.iter().enumerate() {
        let c = c
            .resolve(prof)
            .ok_or_else(|| anyhow!("c[{k}]: unknown symbol"))?;
        let class = classify_speed(prof, c)?;
        let p = match class {
            SpeedClass::SubCritical { p } => Some(p),
            _ => None,
        };
        out.cells.push(
            Cell::new("class", p.unwrap_or(f64::NAN))
                .param("c", c)
                .with_label(class.label()),
        );
        table.push(vec![c.into(), class.label().into(), p.into()]);
    }
    out.tables.push(table);
    Ok(())
}

fn many_to_one(ctx: &Ctx, out: &mut Output) -> anyhow::Result<()> {
    let prof = ctx.prof;
    let controls = ctx.sim();
    let mut table = Table::new(
        "many_to_one",
        &[
            "p",
            "t",
            "g",
            "tree_mean",
            "tree_se",
            "spine_mean",
            "spine_se",
            "z",
        ],
    );
    for p in ctx.ps()? {
        for &t in &ctx.e.t {
            for g in &ctx.e.g {
                let gf: fn(f64) -> f64 = match g.as_str() {
                    "one" => |_| 1.0,
                    _ => |x| x,
                };
                let r = many_to_one_check(prof, p, t, gf, ctx.replicates(), ctx.seed, &controls)?;
                let keyed = |c: Cell| c.param("p", p).param("t", t).tag("g", g);
                out.cells
                    .push(keyed(Cell::new("z", r.z_score).with_n(r.tree.n)));
                out.cells
                    .push(keyed(Cell::from_summary("tree_mean", &r.tree)));
                out.cells
                    .push(keyed(Cell::from_summary("spine_mean", &r.spine)));
                table.push(vec![
                    p.into(),
                    t.into(),
                    g.as_str().into(),
                    r.tree.mean.into(),
                    r.tree.se.into(),
                    r.spine.mean.into(),
                    r.spine.se.into(),
                    r.z_score.into(),
                ]);
            }
        }
    }
    out.tables.push(table);
    Ok(())
}

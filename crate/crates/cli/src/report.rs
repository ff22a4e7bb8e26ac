use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use reinstab::certificates::{certify_model, Certificate};
use reinstab::closed_loop::ClosedLoop;
use reinstab::equilibria::{equilibria_of, operating_equilibrium, Branch, BranchLabel};
use reinstab::matrixlab::{classify, static_gains, StabilityClass, StaticGains, STAB_TOL};
use reinstab::model::{ControllerSpec, Model, ModelDocument, Plant};
use reinstab::simulate::{
    antithetic_identity_error, default_initial_state, integrate, settling, switching_experiment,
    Settling, SimOptions, SolverStats, SweepAxis, SweepOptions, SweepResult, SwitchingExperiment,
};
use reinstab::transfer::{classify_pr, output_transfer, PrClass, PrTag, TransferFunction};
use reinstab::{Error, Result};

use crate::table::{num, opt, Table};

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TransferEntry {
    pub name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_star: Option<f64>,
    pub transfer: TransferFunction,
    pub pr: PrClass,
}

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub t_end: f64,
    pub tol: f64,
    pub x0: Vec<f64>,
    pub labels: Vec<String>,
    pub final_state: Vec<f64>,
    pub setpoint: f64,
    pub settling: Settling,
    pub min_entry: f64,
    pub points: usize,
    pub stats: SolverStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity_error: Option<f64>,
}

/// Everything a command computed. Each field is a module output verbatim.
#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub wall_clock_ms: f64,
    pub model: ModelDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<StabilityClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<StaticGains>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<Vec<Branch>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibria_error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer: Option<Vec<TransferEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingExperiment>,
}

impl Report {
    fn new(command: &'static str, model: &Model) -> Self {
        let (classification, gains) = match &model.plant {
            Plant::Linear(l) => (Some(classify(&l.a)), static_gains(&l.a, &l.b0).ok()),
            Plant::Nonlinear(_) => (None, None),
        };
        Self {
            tool: "reinstab",
            version: env!("CARGO_PKG_VERSION"),
            command,
            wall_clock_ms: 0.0,
            model: model.to_document(),
            classification,
            gains,
            equilibria: None,
            equilibria_error: None,
            certificate: None,
            transfer: None,
            simulation: None,
            sweep: None,
            switching: None,
        }
    }

    fn with_equilibria(mut self, model: &Model) -> Self {
        match equilibria_of(&model.plant, &model.controller) {
            Ok(b) => self.equilibria = Some(b),
            Err(e) => self.equilibria_error = Some((&e).into()),
        }
        self
    }
}

pub struct Outcome {
    pub report: Report,
    /// Rows written by `--out`.
    pub table: Table,
    /// Print the table as CSV on stdout in text mode.
    pub table_is_primary: bool,
    /// Include the table in the text summary.
    pub table_in_text: bool,
    pub success: bool,
}

fn hypothesis_table(cert: &Certificate) -> Table {
    let mut t = Table::new(["theorem", "hypothesis", "passed", "value", "witness"]);
    for h in &cert.hypotheses {
        t.push(vec![
            format!("{:?}", cert.theorem),
            h.name.clone(),
            h.passed.to_string(),
            opt(h.value),
            h.witness.clone(),
        ]);
    }
    t
}

pub fn analyze(model: &Model) -> Outcome {
    let mut report = Report::new("analyze", model).with_equilibria(model);
    let cert = certify_model(model);
    let table = hypothesis_table(&cert);
    let success = cert.is_stable();
    report.certificate = Some(cert);
    Outcome {
        report,
        table,
        table_is_primary: false,
        table_in_text: false,
        success,
    }
}

pub fn certify(model: &Model) -> Outcome {
    let mut out = analyze(model);
    out.report.command = "certify";
    out.report.equilibria = None;
    out.report.equilibria_error = None;
    out
}

pub fn equilibrium(model: &Model) -> Outcome {
    let report = Report::new("equilibrium", model).with_equilibria(model);
    let labels = reinstab::simulate::state_labels(model.plant.dim(), &model.controller);
    let mut header = vec!["label".to_string(), "admissible".into(), "u_star".into(), "residual".into()];
    header.extend(labels);
    let mut table = Table::new(header);
    let mut success = false;
    for b in report.equilibria.iter().flatten() {
        success |= b.label == BranchLabel::Positive && b.admissibility.admissible;
        let mut row = vec![
            format!("{:?}", b.label).to_lowercase(),
            b.admissibility.admissible.to_string(),
            num(b.equilibrium.u_star),
            num(b.equilibrium.residual),
        ];
        row.extend(b.equilibrium.state().iter().copied().map(num));
        table.push(row);
    }
    Outcome {
        report,
        table,
        table_is_primary: false,
        table_in_text: false,
        success,
    }
}

pub fn spr(model: &Model) -> Result<Outcome> {
    let mut report = Report::new("spr", model);
    let mut entries = Vec::new();
    match &model.plant {
        Plant::Linear(l) => {
            let h = output_transfer(&l.a);
            entries.push(TransferEntry {
                name: "plant",
                u_star: None,
                pr: classify_pr(&h),
                transfer: h,
            });
            if let Ok(eq) = operating_equilibrium(&model.plant, &model.controller) {
                let h = output_transfer(&l.a.with_output_degradation(eq.u_star));
                entries.push(TransferEntry {
                    name: "operating",
                    u_star: Some(eq.u_star),
                    pr: classify_pr(&h),
                    transfer: h,
                });
            }
        }
        Plant::Nonlinear(_) => {
            let cert = certify_model(model);
            if let (Some(t), Some(pr)) = (cert.evidence.reduced_system, cert.evidence.reduced_pr) {
                entries.push(TransferEntry {
                    name: "reduced",
                    u_star: cert.evidence.equilibrium.map(|e| e.u_star),
                    transfer: t,
                    pr,
                });
            } else {
                return Err(Error::NoCertificateFound(
                    "no reduced transfer function at this set-point".into(),
                ));
            }
        }
    }
    let mut table = Table::new(["transfer", "condition", "value"]);
    for e in &entries {
        let ev = &e.pr.evidence;
        let rows: [(&str, String); 11] = [
            ("tag", format!("{:?}", e.pr.tag)),
            ("poles_open_left", ev.poles_open_left.to_string()),
            ("poles_closed_left", ev.poles_closed_left.to_string()),
            ("axis_residues_ok", ev.axis_residues_ok.to_string()),
            ("re_nonnegative", ev.re_nonnegative.to_string()),
            ("re_positive", ev.re_positive.to_string()),
            ("worst_omega", num(ev.worst_omega)),
            ("worst_value", num(ev.worst_value)),
            ("feedthrough", num(ev.feedthrough)),
            ("tail_limit", num(ev.tail_limit)),
            ("delta", opt(ev.delta)),
        ];
        for (k, v) in rows {
            table.push(vec![e.name.to_string(), k.to_string(), v]);
        }
    }
    let success = entries.last().is_some_and(|e| e.pr.at_least(PrTag::SPR));
    report.transfer = Some(entries);
    Ok(Outcome {
        report,
        table,
        table_is_primary: false,
        table_in_text: true,
        success,
    })
}

pub fn simulate(model: &Model, t_end: f64, tol: f64, x0: Option<Vec<f64>>) -> Result<Outcome> {
    let mut report = Report::new("simulate", model);
    let x0 = match x0 {
        Some(v) => DVector::from_vec(v),
        None => default_initial_state(&model.plant, &model.controller),
    };
    let opts = SimOptions {
        t_end,
        tol,
        ..SimOptions::default()
    };
    let cl = ClosedLoop::new(&model.plant, model.controller);
    let traj = integrate(&cl, &x0, &opts)?;
    let r = model.controller.setpoint();
    let s = settling(&traj, r);
    let identity_error = match model.controller {
        ControllerSpec::Airc(_) | ControllerSpec::PType(_) => antithetic_identity_error(&cl, &traj).ok(),
        _ => None,
    };
    let mut header = vec!["t".to_string()];
    header.extend(traj.labels.iter().cloned());
    let mut table = Table::new(header);
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![num(*t)];
        row.extend(y.iter().copied().map(num));
        table.push(row);
    }
    report.simulation = Some(SimulationSummary {
        t_end,
        tol,
        x0: x0.iter().copied().collect(),
        labels: traj.labels.clone(),
        final_state: traj.final_state().to_vec(),
        setpoint: r,
        settling: s,
        min_entry: traj.min_entry(),
        points: traj.len(),
        stats: traj.stats,
        identity_error,
    });
    Ok(Outcome {
        report,
        table,
        table_is_primary: false,
        table_in_text: false,
        success: s.settled,
    })
}

pub fn sweep(model: &Model, axes: &[SweepAxis], simulate: bool, t_end: f64, tol: f64) -> Result<Outcome> {
    let mut report = Report::new("sweep", model);
    let opts = SweepOptions {
        simulate,
        sim: SimOptions {
            t_end,
            tol,
            ..SimOptions::default()
        },
        threads: None,
    };
    let res = reinstab::simulate::sweep(model, axes, &opts)?;
    let mut header: Vec<String> = res.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(
        ["verdict", "abscissa", "settled", "settling_time", "steady_state_error", "error"]
            .map(String::from),
    );
    let mut table = Table::new(header);
    for c in &res.cells {
        let mut row: Vec<String> = c.params.iter().copied().map(num).collect();
        row.push(format!("{:?}", c.verdict));
        row.push(opt(c.abscissa));
        row.push(c.settled.map_or(String::new(), |s| s.to_string()));
        row.push(opt(c.settling_time));
        row.push(opt(c.steady_state_error));
        row.push(c.error.clone().unwrap_or_default());
        table.push(row);
    }
    let success = res.all_stable(STAB_TOL);
    report.sweep = Some(res);
    Ok(Outcome {
        report,
        table,
        table_is_primary: true,
        table_in_text: false,
        success,
    })
}

pub fn switching(model: &Model, grid: &[f64], t_end: f64, tol: f64) -> Result<Outcome> {
    let mut report = Report::new("switching", model);
    let (Plant::Linear(net), ControllerSpec::Airc(ctrl)) = (&model.plant, model.controller) else {
        return Err(Error::Unsupported(
            "switching needs a linear plant with the airc controller".into(),
        ));
    };
    let opts = SimOptions {
        t_end,
        tol,
        ..SimOptions::default()
    };
    let exp = switching_experiment(net, &ctrl, grid, &opts)?;
    let mut table = Table::new([
        "eta",
        "z1",
        "z2",
        "flux",
        "predicted_z1",
        "predicted_z2",
        "abscissa",
        "converged",
    ]);
    for (row, run) in exp.table.rows.iter().zip(&exp.runs) {
        table.push(vec![
            num(row.eta),
            num(row.z1),
            num(row.z2),
            num(row.flux),
            num(row.predicted_z1),
            num(row.predicted_z2),
            opt(run.abscissa),
            run.converged.map_or("-".into(), |c| c.to_string()),
        ]);
    }
    let success = exp.runs.iter().all(|r| r.converged != Some(false));
    report.switching = Some(exp);
    Ok(Outcome {
        report,
        table,
        table_is_primary: false,
        table_in_text: true,
        success,
    })
}

fn aligned(table: &Table) -> String {
    let mut widths: Vec<usize> = table.header.iter().map(String::len).collect();
    for r in &table.rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(&table.header).chain(&table.rows) {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "  {}", cells.join("  ").trim_end());
    }
    out
}

/// Human-readable summary.
pub fn text(outcome: &Outcome) -> String {
    let r = &outcome.report;
    let mut s = String::new();
    let name = r.model.name().unwrap_or("model");
    let _ = writeln!(s, "{:<16}{name} ({} controller)", "model", r.model.controller_kind());
    if let Some(c) = &r.classification {
        let _ = writeln!(s, "{:<16}{:?} (spectral abscissa {:.6e})", "class", c.tag, c.spectral_abscissa);
    }
    if let Some(g) = &r.gains {
        let _ = writeln!(s, "{:<16}g0 = {}, g1 = {}, gn = {}", "gains", g.g0, g.g1, g.gn);
    }
    for b in r.equilibria.iter().flatten() {
        let state: Vec<String> = b.equilibrium.state().iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(
            s,
            "{:<16}{:?}: admissible {}, u* = {}, state [{}]",
            "equilibrium",
            b.label,
            b.admissibility.admissible,
            b.equilibrium.u_star,
            state.join(", ")
        );
        if let Some(reason) = &b.admissibility.reason {
            let _ = writeln!(s, "{:<16}{reason}", "");
        }
    }
    if let Some(e) = &r.equilibria_error {
        let _ = writeln!(s, "{:<16}{}", "equilibrium", e.message);
    }
    if let Some(c) = &r.certificate {
        let _ = writeln!(s, "{:<16}{:?}", "theorem", c.theorem);
        for h in &c.hypotheses {
            let mark = if h.passed { "ok" } else { "FAILED" };
            let _ = writeln!(s, "{:<16}[{mark}] {}: {}", "hypothesis", h.name, h.witness);
        }
        if let Some(a) = c.evidence.jacobian_abscissa {
            let _ = writeln!(s, "{:<16}{a:.6e}", "jacobian");
        }
        for note in &c.evidence.notes {
            let _ = writeln!(s, "{:<16}{note}", "note");
        }
        let _ = writeln!(s, "{:<16}{:?}", "verdict", c.verdict);
    }
    for e in r.transfer.iter().flatten() {
        let _ = writeln!(s, "{:<16}{}: {:?}", "transfer", e.name, e.pr.tag);
    }
    if let Some(sim) = &r.simulation {
        let _ = writeln!(s, "{:<16}{} points, {} rejected", "simulation", sim.points, sim.stats.rejected);
        let fin: Vec<String> = sim.final_state.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{:<16}[{}]", "final state", fin.join(", "));
        let _ = writeln!(
            s,
            "{:<16}{} (error {:.3e}, settling time {})",
            "settled",
            sim.settling.settled,
            sim.settling.steady_state_error,
            opt(sim.settling.settling_time)
        );
        if let Some(e) = sim.identity_error {
            let _ = writeln!(s, "{:<16}{e:.3e}", "identity error");
        }
    }
    if let Some(sw) = &r.sweep {
        let _ = writeln!(s, "{:<16}{} cells", "sweep", sw.cells.len());
        if let Some(a) = sw.max_abscissa() {
            let _ = writeln!(s, "{:<16}{a:.6e}", "max abscissa");
        }
    }
    if let Some(sw) = &r.switching {
        let _ = writeln!(
            s,
            "{:<16}{:?} (r = {}, g0 = {}, u* = {})",
            "regime", sw.table.regime, sw.table.r, sw.table.g0, sw.table.u_star
        );
    }
    if outcome.table_in_text {
        s.push_str(&aligned(&outcome.table));
    }
    s
}

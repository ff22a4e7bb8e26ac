//! Plants, controllers and the JSON model document.
//!
//! The output species is always the last coordinate. Indices in documents
//! are zero-based, so for `n = 3` the output is species `2`.
//!
//! A model document looks like
//!
//! ```json
//! {
//!   "type": "linear",
//!   "n": 2,
//!   "A": [[-1.0, 0.0], [1.0, -1.0]],
//!   "b0": [1.0, 0.0],
//!   "controller": {"kind": "ptype", "mu": 0.5, "theta": 1.0, "eta": 1.0, "kp": 1.0}
//! }
//! ```
//!
//! Nonlinear plants replace `A` with a list of `terms` drawn from a closed
//! catalog whose members preserve positivity of the state.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ModelErrorCode, Result};
use crate::matrixlab::{RealMatrix, METZLER_TOL};

/// Entries of `x` below this are rejected as negative concentrations.
pub const NEGATIVE_STATE_TOL: f64 = 1e-12;

/// Linear Metzler plant `ẋ = Ax + b₀` with output `x_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearNetwork {
    pub a: RealMatrix,
    pub b0: DVector<f64>,
}

impl LinearNetwork {
    pub fn new(a: RealMatrix, b0: DVector<f64>) -> Result<Self> {
        validate_linear(&a, &b0)?;
        Ok(Self { a, b0 })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }
}

fn invalid(code: ModelErrorCode, pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::InvalidModel {
        code,
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn validate_linear(a: &RealMatrix, b0: &DVector<f64>) -> Result<()> {
    let n = a.dim();
    if b0.len() != n {
        return Err(invalid(
            ModelErrorCode::Shape,
            "/b0",
            format!("expected {n} entries, got {}", b0.len()),
        ));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && a.get(i, j) < -METZLER_TOL {
                return Err(invalid(
                    ModelErrorCode::NonMetzler,
                    format!("/A/{i}/{j}"),
                    format!("off-diagonal entry {} is negative", a.get(i, j)),
                ));
            }
        }
    }
    validate_basal(b0)
}

fn validate_basal(b0: &DVector<f64>) -> Result<()> {
    match b0.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        Some(i) => Err(invalid(
            ModelErrorCode::NegativeBasal,
            format!("/b0/{i}"),
            format!("basal rate {} must be finite and nonnegative", b0[i]),
        )),
        None => Ok(()),
    }
}

/// Catalog of rate terms for nonlinear plants. Each term contributes to a
/// single target species and has an analytic gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateTerm {
    /// `coefficient · x_col` added to species `row`.
    Linear {
        row: usize,
        col: usize,
        coefficient: f64,
    },
    /// `amplitude / (1 + (x_regulator / threshold)^exponent)`.
    HillRepression {
        target: usize,
        regulator: usize,
        amplitude: f64,
        exponent: f64,
        #[serde(default = "unit")]
        threshold: f64,
    },
    /// `amplitude · y / (1 + y)` with `y = (x_regulator / threshold)^exponent`.
    HillActivation {
        target: usize,
        regulator: usize,
        amplitude: f64,
        exponent: f64,
        #[serde(default = "unit")]
        threshold: f64,
    },
    /// `sign · coefficient · x_j · x_k`. Consumption (`sign = -1`) requires
    /// the target to be one of the factors.
    MassAction2 {
        target: usize,
        factors: [usize; 2],
        coefficient: f64,
        sign: i8,
    },
}

fn unit() -> f64 {
    1.0
}

impl RateTerm {
    fn target(&self) -> usize {
        match *self {
            RateTerm::Linear { row, .. } => row,
            RateTerm::HillRepression { target, .. }
            | RateTerm::HillActivation { target, .. }
            | RateTerm::MassAction2 { target, .. } => target,
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        match *self {
            RateTerm::Linear {
                col, coefficient, ..
            } => coefficient * x[col],
            RateTerm::HillRepression {
                regulator,
                amplitude,
                exponent,
                threshold,
                ..
            } => amplitude / (1.0 + hill_power(x[regulator], threshold, exponent)),
            RateTerm::HillActivation {
                regulator,
                amplitude,
                exponent,
                threshold,
                ..
            } => {
                let y = hill_power(x[regulator], threshold, exponent);
                amplitude * y / (1.0 + y)
            }
            RateTerm::MassAction2 {
                factors: [j, k],
                coefficient,
                sign,
                ..
            } => f64::from(sign) * coefficient * x[j] * x[k],
        }
    }

    /// Adds `∂(term)/∂x` into the target row of `jac`.
    fn add_gradient(&self, x: &DVector<f64>, jac: &mut DMatrix<f64>) {
        let t = self.target();
        match *self {
            RateTerm::Linear {
                col, coefficient, ..
            } => jac[(t, col)] += coefficient,
            RateTerm::HillRepression {
                regulator,
                amplitude,
                exponent,
                threshold,
                ..
            } => {
                let y = hill_power(x[regulator], threshold, exponent);
                let dy = hill_power_derivative(x[regulator], threshold, exponent);
                jac[(t, regulator)] -= amplitude * dy / ((1.0 + y) * (1.0 + y));
            }
            RateTerm::HillActivation {
                regulator,
                amplitude,
                exponent,
                threshold,
                ..
            } => {
                let y = hill_power(x[regulator], threshold, exponent);
                let dy = hill_power_derivative(x[regulator], threshold, exponent);
                jac[(t, regulator)] += amplitude * dy / ((1.0 + y) * (1.0 + y));
            }
            RateTerm::MassAction2 {
                factors: [j, k],
                coefficient,
                sign,
                ..
            } => {
                let c = f64::from(sign) * coefficient;
                jac[(t, j)] += c * x[k];
                jac[(t, k)] += c * x[j];
            }
        }
    }

    fn validate(&self, n: usize, pointer: &str) -> Result<()> {
        let bad = |field: &str, msg: String| {
            Err(invalid(
                ModelErrorCode::InvalidTerm,
                format!("{pointer}/{field}"),
                msg,
            ))
        };
        let index_ok = |i: usize| i < n;
        match *self {
            RateTerm::Linear {
                row,
                col,
                coefficient,
            } => {
                if !index_ok(row) || !index_ok(col) {
                    return bad("row", format!("index out of range for n = {n}"));
                }
                if !coefficient.is_finite() {
                    return bad("coefficient", "must be finite".into());
                }
                if row != col && coefficient < 0.0 {
                    return bad(
                        "coefficient",
                        format!("off-diagonal coefficient {coefficient} must be nonnegative"),
                    );
                }
                if row == col && coefficient > 0.0 {
                    return bad(
                        "coefficient",
                        format!("self-coefficient {coefficient} must be nonpositive"),
                    );
                }
            }
            RateTerm::HillRepression {
                target,
                regulator,
                amplitude,
                exponent,
                threshold,
            }
            | RateTerm::HillActivation {
                target,
                regulator,
                amplitude,
                exponent,
                threshold,
            } => {
                if !index_ok(target) || !index_ok(regulator) {
                    return bad("target", format!("index out of range for n = {n}"));
                }
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    return bad("amplitude", format!("{amplitude} must be nonnegative"));
                }
                if !(exponent >= 1.0 && exponent.is_finite()) {
                    return bad("exponent", format!("{exponent} must be at least 1"));
                }
                if !(threshold > 0.0 && threshold.is_finite()) {
                    return bad("threshold", format!("{threshold} must be positive"));
                }
            }
            RateTerm::MassAction2 {
                target,
                factors,
                coefficient,
                sign,
            } => {
                if !index_ok(target) || !factors.iter().all(|&f| index_ok(f)) {
                    return bad("factors", format!("index out of range for n = {n}"));
                }
                if !(coefficient >= 0.0 && coefficient.is_finite()) {
                    return bad("coefficient", format!("{coefficient} must be nonnegative"));
                }
                if sign != 1 && sign != -1 {
                    return bad("sign", format!("{sign} must be 1 or -1"));
                }
                if sign == -1 && !factors.contains(&target) {
                    return bad(
                        "sign",
                        "consumption requires the target among the factors".into(),
                    );
                }
            }
        }
        Ok(())
    }
}

fn hill_power(x: f64, threshold: f64, exponent: f64) -> f64 {
    (x.max(0.0) / threshold).powf(exponent)
}

fn hill_power_derivative(x: f64, threshold: f64, exponent: f64) -> f64 {
    let y = x.max(0.0) / threshold;
    if exponent == 1.0 {
        1.0 / threshold
    } else {
        exponent * y.powf(exponent - 1.0) / threshold
    }
}

/// Plant `ẋ = f(x) + b₀` with `f` a sum of catalog terms.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearNetwork {
    pub n: usize,
    pub terms: Vec<RateTerm>,
    pub b0: DVector<f64>,
}

impl NonlinearNetwork {
    pub fn new(n: usize, terms: Vec<RateTerm>, b0: DVector<f64>) -> Result<Self> {
        if n == 0 {
            return Err(invalid(ModelErrorCode::Shape, "/n", "dimension must be positive"));
        }
        if b0.len() != n {
            return Err(invalid(
                ModelErrorCode::Shape,
                "/b0",
                format!("expected {n} entries, got {}", b0.len()),
            ));
        }
        for (i, t) in terms.iter().enumerate() {
            t.validate(n, &format!("/terms/{i}"))?;
        }
        validate_basal(&b0)?;
        Ok(Self { n, terms, b0 })
    }

    /// `f(x)`, without the basal vector.
    pub fn rate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_state(x, self.n)?;
        Ok(self.rate_unchecked(x))
    }

    pub(crate) fn rate_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.n);
        for t in &self.terms {
            f[t.target()] += t.value(x);
        }
        f
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_state(x, self.n)?;
        let mut jac = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            t.add_gradient(x, &mut jac);
        }
        Ok(jac)
    }

    /// Matrix collecting the `Linear` terms only.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            if let RateTerm::Linear {
                row,
                col,
                coefficient,
            } = *t
            {
                m[(row, col)] += coefficient;
            }
        }
        m
    }

    pub fn is_linear(&self) -> bool {
        self.terms
            .iter()
            .all(|t| matches!(t, RateTerm::Linear { .. }))
    }
}

fn check_state(x: &DVector<f64>, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {n}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().position(|&v| v < -NEGATIVE_STATE_TOL) {
        return Err(Error::Precondition(format!(
            "state entry {i} is negative ({})",
            x[i]
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Plant {
    Linear(LinearNetwork),
    Nonlinear(NonlinearNetwork),
}

impl Plant {
    pub fn dim(&self) -> usize {
        match self {
            Plant::Linear(l) => l.dim(),
            Plant::Nonlinear(nl) => nl.n,
        }
    }

    pub fn b0(&self) -> &DVector<f64> {
        match self {
            Plant::Linear(l) => &l.b0,
            Plant::Nonlinear(nl) => &nl.b0,
        }
    }

    /// `f(x)`, excluding `b₀`. For linear plants this is `Ax` and accepts
    /// any sign pattern of `x`.
    pub fn rate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Plant::Linear(l) => Ok(l.a.as_matrix() * x),
            Plant::Nonlinear(nl) => nl.rate(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            Plant::Linear(l) => Ok(l.a.as_matrix().clone()),
            Plant::Nonlinear(nl) => nl.jacobian(x),
        }
    }

    pub fn as_linear(&self) -> Result<&LinearNetwork> {
        match self {
            Plant::Linear(l) => Ok(l),
            Plant::Nonlinear(_) => Err(Error::Unsupported(
                "this analysis needs a linear plant".into(),
            )),
        }
    }
}

/// Antithetic integral rein controller: `z₁` drives production of `x₁`,
/// `z₂` drives degradation of `x_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircParams {
    pub mu: f64,
    pub theta: f64,
    pub eta: f64,
    pub ki: f64,
    pub kp: f64,
}

/// p-type antithetic controller acting on the degradation of `x_n`; the
/// annihilation rate is `k_p η z₁ z₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PTypeAic {
    pub mu: f64,
    pub theta: f64,
    pub eta: f64,
    pub kp: f64,
}

impl PTypeAic {
    pub fn setpoint(&self) -> f64 {
        self.mu / self.theta
    }
}

/// `ż = -α z (μ - x_n)`, acting through `-e_n x_n k_p z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialIc {
    pub mu: f64,
    pub alpha: f64,
    pub kp: f64,
}

/// `ż = -(k/β) z (β - z)(r - x_n)`, acting through `-e_n x_n z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticIc {
    pub r: f64,
    pub k: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerSpec {
    Airc(AircParams),
    #[serde(rename = "ptype")]
    PType(PTypeAic),
    Exponential(ExponentialIc),
    Logistic(LogisticIc),
}

impl ControllerSpec {
    /// Target value of the output `x_n`.
    pub fn setpoint(&self) -> f64 {
        match self {
            ControllerSpec::Airc(c) => c.mu / c.theta,
            ControllerSpec::PType(c) => c.setpoint(),
            ControllerSpec::Exponential(c) => c.mu,
            ControllerSpec::Logistic(c) => c.r,
        }
    }

    /// Moves the set-point, keeping `θ` fixed for antithetic controllers.
    pub fn with_setpoint(mut self, r: f64) -> Self {
        match &mut self {
            ControllerSpec::Airc(c) => c.mu = r * c.theta,
            ControllerSpec::PType(c) => c.mu = r * c.theta,
            ControllerSpec::Exponential(c) => c.mu = r,
            ControllerSpec::Logistic(c) => c.r = r,
        }
        self
    }

    /// Sets a parameter by name; `r` moves the set-point.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        if name == "r" {
            *self = self.with_setpoint(value);
            return Ok(());
        }
        let slot = match (self as &mut ControllerSpec, name) {
            (ControllerSpec::Airc(c), "mu") => &mut c.mu,
            (ControllerSpec::Airc(c), "theta") => &mut c.theta,
            (ControllerSpec::Airc(c), "eta") => &mut c.eta,
            (ControllerSpec::Airc(c), "ki") => &mut c.ki,
            (ControllerSpec::Airc(c), "kp") => &mut c.kp,
            (ControllerSpec::PType(c), "mu") => &mut c.mu,
            (ControllerSpec::PType(c), "theta") => &mut c.theta,
            (ControllerSpec::PType(c), "eta") => &mut c.eta,
            (ControllerSpec::PType(c), "kp") => &mut c.kp,
            (ControllerSpec::Exponential(c), "mu") => &mut c.mu,
            (ControllerSpec::Exponential(c), "alpha") => &mut c.alpha,
            (ControllerSpec::Exponential(c), "kp") => &mut c.kp,
            (ControllerSpec::Logistic(c), "k") => &mut c.k,
            (ControllerSpec::Logistic(c), "beta") => &mut c.beta,
            (ctrl, _) => {
                return Err(Error::Unsupported(format!(
                    "controller {} has no parameter `{name}`",
                    ctrl.kind()
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ControllerSpec::Airc(_) => "airc",
            ControllerSpec::PType(_) => "ptype",
            ControllerSpec::Exponential(_) => "exponential",
            ControllerSpec::Logistic(_) => "logistic",
        }
    }

    /// Names and values of every parameter, in document order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ControllerSpec::Airc(c) => vec![
                ("mu", c.mu),
                ("theta", c.theta),
                ("eta", c.eta),
                ("ki", c.ki),
                ("kp", c.kp),
            ],
            ControllerSpec::PType(c) => vec![
                ("mu", c.mu),
                ("theta", c.theta),
                ("eta", c.eta),
                ("kp", c.kp),
            ],
            ControllerSpec::Exponential(c) => {
                vec![("mu", c.mu), ("alpha", c.alpha), ("kp", c.kp)]
            }
            ControllerSpec::Logistic(c) => vec![("r", c.r), ("k", c.k), ("beta", c.beta)],
        }
    }

    /// Number of controller states appended to the plant state.
    pub fn state_dim(&self) -> usize {
        match self {
            ControllerSpec::Airc(_) | ControllerSpec::PType(_) => 2,
            ControllerSpec::Exponential(_) | ControllerSpec::Logistic(_) => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.params() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(
                    ModelErrorCode::NonPositiveParameter,
                    format!("/controller/{name}"),
                    format!("{name} = {v} must be strictly positive"),
                ));
            }
        }
        Ok(())
    }
}

/// A validated plant together with its controller.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: Option<String>,
    pub plant: Plant,
    pub controller: ControllerSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NetworkKind {
    Linear,
    Nonlinear,
}

/// On-disk form of a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    #[serde(rename = "type")]
    kind: NetworkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    n: usize,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<RateTerm>>,
    b0: Vec<f64>,
    controller: ControllerSpec,
}

impl ModelDocument {
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn controller_kind(&self) -> &'static str {
        self.controller.kind()
    }

    fn into_model(self) -> Result<Model> {
        let b0 = DVector::from_vec(self.b0);
        let plant = match self.kind {
            NetworkKind::Linear => {
                if self.terms.is_some() {
                    return Err(invalid(
                        ModelErrorCode::Shape,
                        "/terms",
                        "linear models take a matrix `A`, not `terms`",
                    ));
                }
                let rows = self
                    .a
                    .ok_or_else(|| invalid(ModelErrorCode::Shape, "/A", "missing matrix `A`"))?;
                if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
                    return Err(invalid(
                        ModelErrorCode::Shape,
                        "/A",
                        format!("expected a {0}x{0} matrix", self.n),
                    ));
                }
                let a = RealMatrix::from_rows(&rows)
                    .map_err(|e| invalid(ModelErrorCode::Shape, "/A", e.to_string()))?;
                Plant::Linear(LinearNetwork::new(a, b0)?)
            }
            NetworkKind::Nonlinear => {
                if self.a.is_some() {
                    return Err(invalid(
                        ModelErrorCode::Shape,
                        "/A",
                        "nonlinear models take `terms`, not a matrix",
                    ));
                }
                let terms = self
                    .terms
                    .ok_or_else(|| invalid(ModelErrorCode::Shape, "/terms", "missing `terms`"))?;
                Plant::Nonlinear(NonlinearNetwork::new(self.n, terms, b0)?)
            }
        };
        self.controller.validate()?;
        Ok(Model {
            name: self.name,
            plant,
            controller: self.controller,
        })
    }
}

impl Model {
    pub fn to_document(&self) -> ModelDocument {
        let (kind, a, terms) = match &self.plant {
            Plant::Linear(l) => (NetworkKind::Linear, Some(l.a.to_rows()), None),
            Plant::Nonlinear(nl) => (NetworkKind::Nonlinear, None, Some(nl.terms.clone())),
        };
        ModelDocument {
            kind,
            name: self.name.clone(),
            description: None,
            n: self.plant.dim(),
            a,
            terms,
            b0: self.plant.b0().iter().copied().collect(),
            controller: self.controller,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model documents serialize")
    }

    pub fn with_controller(&self, controller: ControllerSpec) -> Model {
        Model {
            controller,
            ..self.clone()
        }
    }
}

/// Parses and validates a model document.
pub fn load_model(text: &str) -> Result<Model> {
    load_model_with_overrides(text, &[])
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    load_model(&text)
}

/// Parses a document after applying `key=value` overrides.
///
/// A dotted key (`controller.kp`, `A.2.2`, `b0.0`) addresses the JSON tree
/// directly. A bare key names a controller parameter, falling back to a
/// top-level field; the bare key `r` moves the set-point.
pub fn load_model_with_overrides(text: &str, overrides: &[(String, f64)]) -> Result<Model> {
    let mut value: Value = serde_json::from_str(text).map_err(parse_error)?;
    let mut setpoint = None;
    for (key, v) in overrides {
        if key == "r" {
            setpoint = Some(*v);
            continue;
        }
        apply_override(&mut value, key, *v)?;
    }
    let doc: ModelDocument = serde_json::from_value(value).map_err(parse_error)?;
    let mut model = doc.into_model()?;
    if let Some(r) = setpoint {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid(
                ModelErrorCode::NonPositiveParameter,
                "/controller",
                format!("set-point r = {r} must be strictly positive"),
            ));
        }
        model.controller = model.controller.with_setpoint(r);
    }
    Ok(model)
}

fn parse_error(e: serde_json::Error) -> Error {
    invalid(ModelErrorCode::Parse, "", e.to_string())
}

fn apply_override(doc: &mut Value, key: &str, v: f64) -> Result<()> {
    let unknown = || {
        invalid(
            ModelErrorCode::Parse,
            format!("/{}", key.replace('.', "/")),
            format!("override `{key}` does not address a numeric field"),
        )
    };
    let number = serde_json::Number::from_f64(v).ok_or_else(unknown)?;
    if !key.contains('.') {
        if let Some(slot) = doc
            .get_mut("controller")
            .and_then(|c| c.get_mut(key))
            .filter(|s| s.is_number())
        {
            *slot = Value::Number(number);
            return Ok(());
        }
    }
    let mut node = doc;
    for seg in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(seg),
            Value::Array(arr) => seg.parse::<usize>().ok().and_then(|i| arr.get_mut(i)),
            _ => None,
        }
        .ok_or_else(unknown)?;
    }
    if !node.is_number() {
        return Err(unknown());
    }
    *node = Value::Number(number);
    Ok(())
}

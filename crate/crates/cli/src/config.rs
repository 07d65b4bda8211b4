//! Flat key-value run configuration. Keys are dotted (`penalty.lambda0`);
//! a JSON file supplies a base layer and command-line flags override it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use reinfer_core::conditioning::QnParams;
use reinfer_core::engine::{Method, PenaltySchedule, QnInit, RunConfig};
use reinfer_core::{Error, Result, Scheme, SchemeConfig};

pub type Flat = BTreeMap<String, Value>;

/// Every recognised key with its default. `null` means "derive from the
/// data or the rule of thumb".
pub fn defaults() -> Flat {
    let pairs = [
        ("data", Value::Null),
        ("model", json!("ols")),
        ("outcome", json!("y")),
        ("regressors", Value::Null),
        ("cluster", Value::Null),
        ("out", json!("out")),
        ("method", json!("rqn")),
        ("scheme", json!("gaussian-weights")),
        ("m", Value::Null),
        ("cluster_aware", json!(false)),
        ("demean", json!(false)),
        ("gamma", json!(0.1)),
        ("draws", json!(2000)),
        ("burn", Value::Null),
        ("seed", json!(0)),
        ("alpha", json!(0.05)),
        ("theta0", Value::Null),
        ("modify_hessian", json!(false)),
        ("penalty.enabled", json!(false)),
        ("penalty.lambda0", json!(20.0)),
        ("penalty.decay", json!(0.9)),
        ("penalty.duration", Value::Null),
        ("qn.init", json!("hessian")),
        ("qn.L", Value::Null),
        ("qn.lambda_s", Value::Null),
        ("qn.lambda_min", Value::Null),
        ("qn.max_refresh", Value::Null),
        ("dgp", json!("linear")),
        ("dgp.n", json!(200)),
        ("dgp.theta", json!([1.0, 0.5, -0.5])),
        ("replications", json!(100)),
        ("methods", json!(["rnr", "rqn", "boot"])),
        ("dmk.k", json!(1)),
        ("saddle.h", json!([1.0, -1.0])),
        ("saddle.gamma", json!(0.1)),
        ("saddle.iters", json!(50)),
        ("saddle.c_grid", json!([0.0, 0.1, 0.5, 1.0, 5.0])),
        ("saddle.seeds", json!(100)),
        ("saddle.noise_sd", json!(10.0)),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Parse a flag value: JSON when it parses, a plain string otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Defaults, then the file (if any), then `overrides`. Unknown keys are
/// rejected. A nested `config` object (as echoed in reports) is accepted.
pub fn resolve(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<Flat> {
    let mut flat = defaults();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)?;
        let mut v: Value = serde_json::from_str(&text)?;
        if let Some(inner) = v.get("config").filter(|c| c.is_object()) {
            v = inner.clone();
        }
        let Value::Object(map) = v else {
            return Err(Error::Config("config file must hold a JSON object".into()));
        };
        for (k, v) in map {
            set(&mut flat, &k, v)?;
        }
    }
    for (k, v) in overrides {
        set(&mut flat, k, v.clone())?;
    }
    Ok(flat)
}

fn set(flat: &mut Flat, key: &str, value: Value) -> Result<()> {
    match flat.get_mut(key) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(Error::Config(format!("unknown config key '{key}'"))),
    }
}

pub struct View<'a>(pub &'a Flat);

impl View<'_> {
    fn raw(&self, key: &str) -> &Value {
        self.0.get(key).unwrap_or(&Value::Null)
    }

    fn bad(key: &str, want: &str, v: &Value) -> Error {
        Error::Config(format!("config key '{key}' must be {want}, got {v}"))
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s.clone())),
            Value::Number(n) => Ok(Some(n.to_string())),
            v => Err(Self::bad(key, "a string", v)),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            v => v.as_f64().map(Some).ok_or_else(|| Self::bad(key, "a number", v)),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            v => v.as_u64().map(|x| Some(x as usize)).ok_or_else(|| Self::bad(key, "a non-negative integer", v)),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.raw(key);
        v.as_u64().ok_or_else(|| Self::bad(key, "a non-negative integer", v))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        let v = self.raw(key);
        v.as_bool().ok_or_else(|| Self::bad(key, "true or false", v))
    }

    pub fn f64s(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            Value::Array(a) => a.iter().map(|x| x.as_f64().ok_or_else(|| Self::bad(key, "a list of numbers", x))).collect::<Result<_>>().map(Some),
            v => Err(Self::bad(key, "a list of numbers", v)),
        }
    }

    /// A list of strings, or one comma-separated string.
    pub fn strings(&self, key: &str) -> Result<Option<Vec<String>>> {
        match self.raw(key) {
            Value::Null => Ok(None),
            Value::String(s) => Ok(Some(s.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())),
            Value::Array(a) => a
                .iter()
                .map(|x| x.as_str().map(str::to_string).ok_or_else(|| Self::bad(key, "a list of strings", x)))
                .collect::<Result<_>>()
                .map(Some),
            v => Err(Self::bad(key, "a list of strings", v)),
        }
    }

    pub fn require_string(&self, key: &str) -> Result<String> {
        self.string(key)?.ok_or_else(|| Error::Config(format!("config key '{key}' is required")))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require_string("out")?))
    }

    pub fn scheme(&self) -> Result<SchemeConfig> {
        let scheme = Scheme::parse(&self.require_string("scheme")?)?;
        Ok(SchemeConfig {
            scheme,
            m: self.usize("m")?,
            cluster_aware: self.bool("cluster_aware")?,
            demean: self.bool("demean")?,
        })
    }

    /// Run settings for a model of dimension `d`.
    pub fn run_config(&self, d: usize) -> Result<RunConfig> {
        let method = Method::parse(&self.require_string("method")?)?;
        let gamma = self.f64("gamma")?.ok_or_else(|| Error::Config("gamma is required".into()))?;
        let draws = self.usize("draws")?.ok_or_else(|| Error::Config("draws is required".into()))?;
        let theta0 = self.f64s("theta0")?.unwrap_or_else(|| vec![0.0; d]);
        let mut cfg = RunConfig::new(method, theta0, gamma, draws);
        cfg.burn = self.usize("burn")?;
        cfg.scheme = self.scheme()?;
        cfg.seed = self.u64("seed")?;
        cfg.modify_hessian = self.bool("modify_hessian")?;
        cfg.qn_init = match self.require_string("qn.init")?.as_str() {
            "hessian" => QnInit::Hessian,
            "identity" => QnInit::Identity,
            other => return Err(Error::Config(format!("unknown qn.init '{other}' (expected hessian or identity)"))),
        };
        let auto = QnParams::for_dim(d);
        let qn_keys = ["qn.L", "qn.lambda_s", "qn.lambda_min", "qn.max_refresh"];
        if qn_keys.iter().any(|k| !self.raw(k).is_null()) {
            cfg.qn = Some(QnParams {
                l: self.usize("qn.L")?.unwrap_or(auto.l),
                lambda_s: self.f64("qn.lambda_s")?.unwrap_or(auto.lambda_s),
                lambda_min: self.f64("qn.lambda_min")?.unwrap_or(auto.lambda_min),
                max_refresh: self.usize("qn.max_refresh")?.unwrap_or(auto.max_refresh),
            });
        }
        if self.bool("penalty.enabled")? {
            let base = PenaltySchedule::default();
            cfg.penalty = Some(PenaltySchedule {
                lambda0: self.f64("penalty.lambda0")?.unwrap_or(base.lambda0),
                decay: self.f64("penalty.decay")?.unwrap_or(base.decay),
                anchor: None,
                duration: self.usize("penalty.duration")?,
            });
        }
        Ok(cfg)
    }

    pub fn alpha(&self) -> Result<f64> {
        self.f64("alpha")?.ok_or_else(|| Error::Config("alpha is required".into()))
    }
}

/// The flat map with run-derived values filled in, for echoing.
pub fn echo(flat: &Flat, run: Option<&RunConfig>) -> Value {
    let mut out = flat.clone();
    if let Some(r) = run.map(RunConfig::resolved) {
        out.insert("theta0".into(), json!(r.theta0));
        out.insert("burn".into(), json!(r.burn()));
        if let Some(q) = r.qn {
            out.insert("qn.L".into(), json!(q.l));
            out.insert("qn.lambda_s".into(), json!(q.lambda_s));
            out.insert("qn.lambda_min".into(), json!(q.lambda_min));
            out.insert("qn.max_refresh".into(), json!(q.max_refresh));
        }
        if let Some(p) = r.penalty {
            out.insert("penalty.duration".into(), json!(p.duration));
        }
    }
    Value::Object(out.into_iter().collect())
}

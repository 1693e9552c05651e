//! Scenario file schema.
//!
//! Files are JSON. Units: meters, watts, hertz, W/Hz and bits/s/Hz, all on a
//! linear scale. Unknown keys are rejected so typos surface as errors.
//!
//! ```text
//! {
//!   "uavs": [{ "position": [x, y, z],
//!              "array": { "rows": 4, "cols": 4, "spacing": 0.05 },
//!              "phase_shift": 0.0 }],                      // optional
//!   "ue_estimate": [x, y, z],
//!   "radio": { "wavelength": 0.1, "effective_bandwidth": 1e6,
//!              "noise_psd": 1e-10, "lightspeed": 299792458 },  // lightspeed optional
//!   "allocator": { "scheme": "bi-sca",                      // optional
//!                  "rate_floor": 8, "total_power": 6,
//!                  "tolerance": 1e-6, "max_iters": 30,      // optional
//!                  "initial_sensing": [1, 1, 1],            // optional
//!                  "solver_tol": 1e-9,                      // optional
//!                  "linearization": "frechet" | "one-sided",// optional
//!                  "freeze_moment_point": false },          // optional
//!   "robustness": { "delta": 1.0, "p_out": 0.05 },
//!   "montecarlo": { "samples": 100000, "seed": 1,
//!                   "boundary_samples": 1000,               // optional
//!                   "families": ["gaussian", "uniform-ellipsoid", "rademacher-mixture"] },
//!   "sweep": { "parameter": "total_power", "grid": [4, 6, 8],
//!              "schemes": ["nonrobust", "bi-sca"] }         // schemes optional
//! }
//! ```
//!
//! `robustness.delta` is needed by `s-ao`, `robustness.p_out` by `bi-sca`,
//! `cvar-ao` and by outage verification.

use std::fmt;

use nalgebra::Vector3;
use serde_json::{Map, Value};

use crate::allocators::{AllocatorConfig, Linearization, Scheme};
use crate::geometry::{upa_layout, Radio, Scenario, UavSpec, SPEED_OF_LIGHT};
use crate::montecarlo::Family;

/// Schema violation at a dotted key path such as `radio.noise_psd`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for SchemaError {}

type SResult<T> = Result<T, SchemaError>;

fn err<T>(path: &str, message: impl Into<String>) -> SResult<T> {
    Err(SchemaError {
        path: path.to_string(),
        message: message.into(),
    })
}

/// A JSON value together with its key path.
#[derive(Clone, Copy)]
struct Node<'a> {
    value: &'a Value,
    path: &'a str,
}

struct Object<'a> {
    map: &'a Map<String, Value>,
    path: String,
}

impl<'a> Node<'a> {
    fn object(self, allowed: &[&str]) -> SResult<Object<'a>> {
        let Some(map) = self.value.as_object() else {
            return err(self.path, "expected an object");
        };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                return err(&join(self.path, key), "unknown key");
            }
        }
        Ok(Object {
            map,
            path: self.path.to_string(),
        })
    }

    fn number(self) -> SResult<f64> {
        match self.value.as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => err(self.path, "expected a finite number"),
        }
    }

    fn positive(self) -> SResult<f64> {
        let v = self.number()?;
        if v > 0.0 {
            Ok(v)
        } else {
            err(self.path, format!("must be positive, got {v}"))
        }
    }

    fn integer(self) -> SResult<u64> {
        match self.value.as_u64() {
            Some(v) => Ok(v),
            None => err(self.path, "expected a non-negative integer"),
        }
    }

    fn boolean(self) -> SResult<bool> {
        match self.value.as_bool() {
            Some(v) => Ok(v),
            None => err(self.path, "expected true or false"),
        }
    }

    fn string(self) -> SResult<&'a str> {
        match self.value.as_str() {
            Some(v) => Ok(v),
            None => err(self.path, "expected a string"),
        }
    }

    fn array(self) -> SResult<&'a [Value]> {
        match self.value.as_array() {
            Some(v) => Ok(v),
            None => err(self.path, "expected an array"),
        }
    }

    fn vec3(self) -> SResult<Vector3<f64>> {
        let a = self.array()?;
        if a.len() != 3 {
            return err(self.path, format!("expected 3 coordinates, got {}", a.len()));
        }
        let mut v = Vector3::zeros();
        for (i, x) in a.iter().enumerate() {
            let p = format!("{}[{i}]", self.path);
            v[i] = Node { value: x, path: &p }.number()?;
        }
        Ok(v)
    }

    fn numbers(self) -> SResult<Vec<f64>> {
        self.array()?
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let p = format!("{}[{i}]", self.path);
                Node { value: x, path: &p }.number()
            })
            .collect()
    }

    fn strings(self) -> SResult<Vec<&'a str>> {
        self.array()?
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let p = format!("{}[{i}]", self.path);
                match x.as_str() {
                    Some(s) => Ok(s),
                    None => err(&p, "expected a string"),
                }
            })
            .collect()
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl<'a> Object<'a> {
    fn key(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn get<T>(&self, key: &str, f: impl FnOnce(Node<'_>) -> SResult<T>) -> SResult<Option<T>> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => {
                let p = self.key(key);
                f(Node { value: v, path: &p }).map(Some)
            }
        }
    }

    fn req<T>(&self, key: &str, f: impl FnOnce(Node<'_>) -> SResult<T>) -> SResult<T> {
        match self.get(key, f)? {
            Some(v) => Ok(v),
            None => err(&self.key(key), "missing required key"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    RateFloor,
    TotalPower,
    Delta,
    POut,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 4] = [
        SweepParameter::RateFloor,
        SweepParameter::TotalPower,
        SweepParameter::Delta,
        SweepParameter::POut,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RateFloor => "rate_floor",
            SweepParameter::TotalPower => "total_power",
            SweepParameter::Delta => "delta",
            SweepParameter::POut => "p_out",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robustness {
    pub delta: Option<f64>,
    pub p_out: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSection {
    pub samples: usize,
    pub boundary_samples: usize,
    pub seed: u64,
    pub families: Vec<Family>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub schemes: Vec<Scheme>,
}

/// A parsed and validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub scheme: Option<Scheme>,
    pub config: AllocatorConfig,
    pub robustness: Robustness,
    pub montecarlo: Option<MonteCarloSection>,
    pub sweep: Option<SweepSection>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> SResult<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| SchemaError {
            path: String::new(),
            message: format!("not valid JSON: {e}"),
        })?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> SResult<Self> {
        let root = Node { value, path: "" }.object(&[
            "uavs",
            "ue_estimate",
            "radio",
            "allocator",
            "robustness",
            "montecarlo",
            "sweep",
        ])?;

        let radio = root.req("radio", |n| {
            let o = n.object(&["wavelength", "effective_bandwidth", "noise_psd", "lightspeed"])?;
            Ok(Radio {
                wavelength: o.req("wavelength", |n| n.positive())?,
                effective_bandwidth: o.req("effective_bandwidth", |n| n.positive())?,
                noise_psd: o.req("noise_psd", |n| n.positive())?,
                lightspeed: o.get("lightspeed", |n| n.positive())?.unwrap_or(SPEED_OF_LIGHT),
            })
        })?;
        let ue = root.req("ue_estimate", |n| n.vec3())?;
        let uavs = root.req("uavs", |n| {
            let list = n.array()?;
            if list.is_empty() {
                return err(n.path, "at least one UAV is required");
            }
            list.iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = format!("{}[{i}]", n.path);
                    parse_uav(Node { value: v, path: &p })
                })
                .collect::<SResult<Vec<_>>>()
        })?;
        let k = uavs.len();
        let scenario = Scenario::new(radio, ue, uavs).map_err(|e| SchemaError {
            path: "uavs".into(),
            message: e.to_string(),
        })?;

        let (scheme, config) = root.req("allocator", |n| parse_allocator(n, k))?;
        let robustness = root
            .get("robustness", |n| {
                let o = n.object(&["delta", "p_out"])?;
                let delta = o.get("delta", |n| n.positive())?;
                let p_out = o.get("p_out", |n| {
                    let v = n.number()?;
                    if v > 0.0 && v < 1.0 {
                        Ok(v)
                    } else {
                        err(n.path, format!("must lie in (0, 1), got {v}"))
                    }
                })?;
                Ok(Robustness { delta, p_out })
            })?
            .unwrap_or(Robustness {
                delta: None,
                p_out: None,
            });
        let montecarlo = root.get("montecarlo", parse_montecarlo)?;
        let sweep = root.get("sweep", parse_sweep)?;
        let file = Self {
            scenario,
            scheme,
            config,
            robustness,
            montecarlo,
            sweep,
        };
        if let Some(s) = file.scheme {
            file.check_robustness(s)?;
        }
        Ok(file)
    }

    /// Ensures the robustness parameter that `scheme` needs is present.
    pub fn check_robustness(&self, scheme: Scheme) -> SResult<()> {
        match scheme {
            Scheme::SAo if self.robustness.delta.is_none() => err("robustness.delta", "missing required key for s-ao"),
            Scheme::BiSca | Scheme::CvarAo if self.robustness.p_out.is_none() => {
                err("robustness.p_out", format!("missing required key for {scheme}"))
            }
            _ => Ok(()),
        }
    }

    pub fn delta(&self) -> f64 {
        self.robustness.delta.unwrap_or(f64::NAN)
    }

    pub fn p_out(&self) -> f64 {
        self.robustness.p_out.unwrap_or(f64::NAN)
    }
}

fn parse_uav(n: Node<'_>) -> SResult<UavSpec> {
    let o = n.object(&["position", "array", "phase_shift"])?;
    let position = o.req("position", |n| n.vec3())?;
    let offsets = o.req("array", |a| {
        let ao = a.object(&["rows", "cols", "spacing"])?;
        let rows = ao.req("rows", |n| n.integer())?;
        let cols = ao.req("cols", |n| n.integer())?;
        let spacing = ao.req("spacing", |n| n.positive())?;
        upa_layout(rows as usize, cols as usize, spacing).map_err(|e| SchemaError {
            path: a.path.to_string(),
            message: e.to_string(),
        })
    })?;
    let mut spec = UavSpec::new(position, offsets);
    spec.phase_shift = o.get("phase_shift", |n| n.number())?.unwrap_or(0.0);
    Ok(spec)
}

fn parse_allocator(n: Node<'_>, k: usize) -> SResult<(Option<Scheme>, AllocatorConfig)> {
    let o = n.object(&[
        "scheme",
        "rate_floor",
        "total_power",
        "tolerance",
        "max_iters",
        "initial_sensing",
        "solver_tol",
        "linearization",
        "freeze_moment_point",
    ])?;
    let scheme = o.get("scheme", parse_scheme)?;
    let mut cfg = AllocatorConfig::new(
        o.req("rate_floor", |n| n.positive())?,
        o.req("total_power", |n| n.positive())?,
    );
    if let Some(t) = o.get("tolerance", |n| n.positive())? {
        cfg.tolerance = t;
    }
    if let Some(m) = o.get("max_iters", |n| n.integer())? {
        if m == 0 {
            return err(&o.key("max_iters"), "must be at least 1");
        }
        cfg.max_iters = m as usize;
    }
    if let Some(t) = o.get("solver_tol", |n| n.positive())? {
        cfg.solver_tol = t;
    }
    cfg.initial_sensing = o.get("initial_sensing", |s| {
        let v = s.numbers()?;
        if v.len() != k {
            return err(s.path, format!("expected {k} entries, one per UAV, got {}", v.len()));
        }
        if let Some(i) = v.iter().position(|p| !(*p > 0.0)) {
            return err(&format!("{}[{i}]", s.path), "must be positive");
        }
        Ok(v)
    })?;
    if let Some(l) = o.get("linearization", |s| match s.string()? {
        "frechet" => Ok(Linearization::Frechet),
        "one-sided" => Ok(Linearization::OneSided),
        other => err(
            s.path,
            format!("unknown linearization {other:?}; expected frechet or one-sided"),
        ),
    })? {
        cfg.linearization = l;
    }
    if let Some(f) = o.get("freeze_moment_point", |n| n.boolean())? {
        cfg.freeze_moment_point = f;
    }
    Ok((scheme, cfg))
}

fn parse_scheme(n: Node<'_>) -> SResult<Scheme> {
    let s = n.string()?;
    Scheme::parse(s).ok_or_else(|| SchemaError {
        path: n.path.to_string(),
        message: format!("unknown scheme {s:?}; expected nonrobust, s-ao, bi-sca or cvar-ao"),
    })
}

fn parse_montecarlo(n: Node<'_>) -> SResult<MonteCarloSection> {
    let o = n.object(&["samples", "seed", "boundary_samples", "families"])?;
    let samples = o.req("samples", |n| n.integer())?;
    if samples == 0 {
        return err(&o.key("samples"), "must be at least 1");
    }
    let families = match o.get("families", |f| {
        let names = f.strings()?;
        names
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.parse::<Family>().map_err(|_| SchemaError {
                    path: format!("{}[{i}]", f.path),
                    message: format!(
                        "unknown family {s:?}; expected gaussian, uniform-ellipsoid or rademacher-mixture"
                    ),
                })
            })
            .collect::<SResult<Vec<_>>>()
    })? {
        Some(f) if f.is_empty() => return err(&o.key("families"), "at least one family is required"),
        Some(f) => f,
        None => Family::ALL.to_vec(),
    };
    Ok(MonteCarloSection {
        samples: samples as usize,
        boundary_samples: o.get("boundary_samples", |n| n.integer())?.unwrap_or(1000) as usize,
        seed: o.get("seed", |n| n.integer())?.unwrap_or(0),
        families,
    })
}

fn parse_sweep(n: Node<'_>) -> SResult<SweepSection> {
    let o = n.object(&["parameter", "grid", "schemes"])?;
    let parameter = o.req("parameter", |p| {
        let s = p.string()?;
        SweepParameter::parse(s).ok_or_else(|| SchemaError {
            path: p.path.to_string(),
            message: format!("unknown parameter {s:?}; expected rate_floor, total_power, delta or p_out"),
        })
    })?;
    let grid = o.req("grid", |n| n.numbers())?;
    let schemes = o
        .get("schemes", |s| {
            s.array()?
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let p = format!("{}[{i}]", s.path);
                    parse_scheme(Node { value: v, path: &p })
                })
                .collect::<SResult<Vec<_>>>()
        })?
        .unwrap_or_else(|| Scheme::ALL.to_vec());
    Ok(SweepSection {
        parameter,
        grid,
        schemes,
    })
}

//! Plain `key = value` run configuration with sections.
//!
//! ```text
//! preset = fig1            # optional, must come before any section
//!
//! [domain]
//! dim = 2
//! half_width = 0.5
//! subdivisions = 128
//!
//! [anisotropy]
//! density = l1reg:0.01     # iso | l1reg:<delta>[:rot=<deg>] | g:<row-major>;<row-major>...
//!
//! [scheme]
//! scheme = allen_cahn      # allen_cahn | cahn_hilliard_neumann | cahn_hilliard_dirichlet
//! eps_inv = 16pi
//! tau = 1e-4
//! t_end = 0.05
//!
//! [geometry]
//! shape = circle           # circle | sphere | balls | cuboid | uniform
//! center = 0, 0
//! radius = 0.3
//!
//! [output]
//! dir = output
//! vtk = true
//! ```
//!
//! Numbers accept a `pi` suffix (`16pi`, `0.5*pi`). Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::anisotropy::{rotation_2d, rotation_3d, AnisotropyDensity, AnisotropyError, Matrix};
use crate::schemes::{Geometry, Mobility, SchemeConfig, SchemeKind, DEFAULT_EPS_INV};
use crate::solver::SolverOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("key `{key}` given twice")]
    Duplicate { key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("conflicting keys: {0}")]
    Conflict(String),
    #[error("preset `{name}` is not available: {reason}")]
    UnavailablePreset { name: String, reason: String },
}

/// Anisotropy as written in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum AnisotropySpec {
    Isotropic,
    /// Regularized l1 norm, optionally rotated in the `x₁–x₂` plane.
    RegularizedL1 { delta: f64, rotation_deg: f64 },
    /// Explicit matrices, each row-major with `d²` entries.
    Matrices(Vec<Vec<f64>>),
}

impl AnisotropySpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let invalid = |reason: &str| ConfigError::InvalidValue {
            key: "density".into(),
            value: text.into(),
            reason: reason.into(),
        };
        let text = text.trim();
        if text == "iso" {
            return Ok(AnisotropySpec::Isotropic);
        }
        if let Some(rest) = text.strip_prefix("l1reg:") {
            let mut parts = rest.split(':');
            let delta = parse_number(parts.next().unwrap_or("")).map_err(|r| invalid(&r))?;
            let mut rotation_deg = 0.0;
            for opt in parts {
                let Some(deg) = opt.trim().strip_prefix("rot=") else {
                    return Err(invalid("expected `rot=<degrees>`"));
                };
                rotation_deg = parse_number(deg).map_err(|r| invalid(&r))?;
            }
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(invalid("delta must be positive"));
            }
            return Ok(AnisotropySpec::RegularizedL1 { delta, rotation_deg });
        }
        if let Some(rest) = text.strip_prefix("g:") {
            let matrices = rest
                .split(';')
                .map(|m| parse_list(m).map_err(|r| invalid(&r)))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(AnisotropySpec::Matrices(matrices));
        }
        Err(invalid("expected `iso`, `l1reg:<delta>[:rot=<deg>]` or `g:<matrix>;...`"))
    }

    pub fn emit(&self) -> String {
        match self {
            AnisotropySpec::Isotropic => "iso".into(),
            AnisotropySpec::RegularizedL1 { delta, rotation_deg } => {
                if *rotation_deg == 0.0 {
                    format!("l1reg:{delta:?}")
                } else {
                    format!("l1reg:{delta:?}:rot={rotation_deg:?}")
                }
            }
            AnisotropySpec::Matrices(ms) => {
                let body: Vec<String> = ms.iter().map(|m| join(m)).collect();
                format!("g:{}", body.join(";"))
            }
        }
    }

    pub fn build<const D: usize>(&self) -> Result<AnisotropyDensity<D>, AnisotropyError> {
        match self {
            AnisotropySpec::Isotropic => Ok(AnisotropyDensity::isotropic()),
            AnisotropySpec::RegularizedL1 { delta, rotation_deg } => {
                let base = AnisotropyDensity::<D>::regularized_l1(*delta)?;
                if *rotation_deg == 0.0 {
                    return Ok(base);
                }
                let angle = rotation_deg.to_radians();
                let r = match D {
                    2 => Matrix::<D>::from_iterator(rotation_2d(angle).iter().copied()),
                    _ => Matrix::<D>::from_iterator(
                        rotation_3d([0.0, 0.0, 1.0], angle)
                            .expect("fixed axis is nonzero")
                            .iter()
                            .copied(),
                    ),
                };
                base.rotate(&r)
            }
            AnisotropySpec::Matrices(ms) => {
                let mut out = Vec::with_capacity(ms.len());
                for (index, m) in ms.iter().enumerate() {
                    if m.len() != D * D {
                        return Err(AnisotropyError::WrongSize {
                            index,
                            expected: D * D,
                            got: m.len(),
                        });
                    }
                    out.push(Matrix::<D>::from_row_slice(m));
                }
                AnisotropyDensity::new(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub half_width: f64,
    pub subdivisions: usize,
    pub anisotropy: AnisotropySpec,
    pub scheme: SchemeConfig,
    pub geometry: Geometry,
    pub output: OutputConfig,
}

const DEFAULT_SUBDIVISIONS: usize = 128;
const DEFAULT_HALF_WIDTH: f64 = 0.5;

fn parse_number(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (body, pi) = if let Some(b) = t.strip_suffix("*pi") {
        (b, true)
    } else if let Some(b) = t.strip_suffix("pi") {
        (b, true)
    } else {
        (t, false)
    };
    let value = if pi && body.trim().is_empty() {
        1.0
    } else {
        body.trim().parse::<f64>().map_err(|e| format!("not a number ({e})"))?
    };
    let value = if pi { value * std::f64::consts::PI } else { value };
    if value.is_finite() {
        Ok(value)
    } else {
        Err("not finite".into())
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',').map(parse_number).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

/// Raw `section.key → (value, line)` entries.
type Entries = BTreeMap<String, (String, usize)>;

fn tokenize(text: &str) -> Result<(Option<String>, Entries), ConfigError> {
    let mut section = String::new();
    let mut preset = None;
    let mut entries = Entries::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: "unterminated section header".into(),
                });
            };
            section = name.trim().to_string();
            if !["domain", "anisotropy", "scheme", "geometry", "output"].contains(&section.as_str()) {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("unknown section [{section}]"),
                });
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: "expected `key = value`".into(),
            });
        };
        let (key, value) = (key.trim(), value.trim().to_string());
        if section.is_empty() {
            if key != "preset" {
                return Err(ConfigError::UnknownKey {
                    section: String::new(),
                    key: key.into(),
                });
            }
            if preset.replace(value).is_some() {
                return Err(ConfigError::Duplicate { key: "preset".into() });
            }
            continue;
        }
        let full = format!("{section}.{key}");
        if entries.insert(full.clone(), (value, line_no)).is_some() {
            return Err(ConfigError::Duplicate { key: full });
        }
    }
    Ok((preset, entries))
}

/// Key-value pairs a preset contributes before the file's own entries.
fn preset_entries(name: &str) -> Result<Vec<(&'static str, String)>, ConfigError> {
    let unavailable = |which: &str| ConfigError::UnavailablePreset {
        name: name.into(),
        reason: format!(
            "its anisotropy ({which}) is only defined graphically; describe it with an explicit \
             matrix list, e.g. `density = g:1,0,0,0.1;0.1,0,0,1`"
        ),
    };
    let ch = |w_bdry: Option<&str>| {
        let mut v = vec![
            ("scheme.theta", "1".to_string()),
            ("scheme.alpha", "1".to_string()),
            ("scheme.mobility", "constant:2".to_string()),
        ];
        if let Some(w) = w_bdry {
            v.push(("scheme.w_bdry", w.to_string()));
        }
        v
    };
    let mut out: Vec<(&'static str, String)> = vec![("anisotropy.density", "l1reg:0.01".into())];
    out.extend(match name {
        "fig1" => vec![
            ("scheme.scheme", "allen_cahn".into()),
            ("scheme.tau", "1e-4".into()),
            ("scheme.t_end", "0.05".into()),
        ],
        "fig4" => {
            let mut v = vec![
                ("scheme.scheme", "cahn_hilliard_dirichlet".into()),
                ("scheme.tau", "1e-5".into()),
                ("scheme.t_end", "1e-3".into()),
                ("geometry.shape", "uniform".into()),
                ("geometry.value", "1".into()),
            ];
            v.extend(ch(Some("-65")));
            v
        }
        "fig5" => {
            let mut v = vec![
                ("domain.half_width", "8".into()),
                ("domain.subdivisions", "4096".into()),
                ("anisotropy.density", "l1reg:0.3".into()),
                ("scheme.scheme", "cahn_hilliard_dirichlet".into()),
                ("scheme.eps_inv", "32pi".into()),
                ("scheme.tau", "1e-4".into()),
                ("scheme.t_end", "7.5".into()),
                ("geometry.radius", "0.1".into()),
            ];
            v.extend(ch(Some("-2")));
            // later entries win
            v.push(("scheme.alpha", "0.03".into()));
            v
        }
        "fig8" => {
            let mut v = vec![
                ("domain.dim", "3".into()),
                ("anisotropy.density", "l1reg:0.01:rot=45".into()),
                ("scheme.scheme", "cahn_hilliard_neumann".into()),
                ("scheme.tau", "1e-5".into()),
                ("scheme.t_end", "5e-3".into()),
                ("geometry.shape", "cuboid".into()),
                ("geometry.half_extents", "0.4,0.05,0.05".into()),
            ];
            v.extend(ch(None));
            v
        }
        "fig2" | "fig3" => return Err(unavailable("a smoothed hexagon")),
        "fig6" => return Err(unavailable("a smoothed cylinder")),
        "fig7" => return Err(unavailable("a smoothed hexagonal prism")),
        _ => {
            return Err(ConfigError::UnavailablePreset {
                name: name.into(),
                reason: "unknown preset; known: fig1, fig4, fig5, fig8".into(),
            })
        }
    });
    Ok(out)
}

struct Reader {
    entries: Entries,
    preset: BTreeMap<String, String>,
}

impl Reader {
    fn raw(&mut self, key: &str) -> Option<String> {
        if let Some((v, _)) = self.entries.remove(key) {
            self.preset.remove(key);
            return Some(v);
        }
        self.preset.remove(key)
    }

    fn explicit(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn get<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => parse(&v).map(Some).map_err(|reason| ConfigError::InvalidValue {
                key: key.into(),
                value: v,
                reason,
            }),
        }
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, parse_number)
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key, |s| s.parse::<usize>().map_err(|e| e.to_string()))
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key, |s| s.parse::<bool>().map_err(|e| e.to_string()))
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key, parse_list)
    }
}

fn parse_mobility(text: &str) -> Result<Mobility, String> {
    if text == "degenerate" {
        return Ok(Mobility::Degenerate);
    }
    if let Some(b0) = text.strip_prefix("constant:") {
        let b0 = parse_number(b0)?;
        if b0 > 0.0 {
            return Ok(Mobility::Constant(b0));
        }
        return Err("constant mobility must be positive".into());
    }
    Err("expected `degenerate` or `constant:<b0>`".into())
}

fn emit_mobility(m: &Mobility) -> String {
    match m {
        Mobility::Degenerate => "degenerate".into(),
        Mobility::Constant(b0) => format!("constant:{b0:?}"),
    }
}

fn parse_balls(text: &str, dim: usize) -> Result<Vec<(Vec<f64>, f64)>, String> {
    text.split(';')
        .map(|b| {
            let v = parse_list(b)?;
            if v.len() != dim + 1 {
                return Err(format!("each ball needs {dim} center coordinates and a radius"));
            }
            Ok((v[..dim].to_vec(), v[dim]))
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let (preset, entries) = tokenize(text)?;
        let preset: BTreeMap<String, String> = match &preset {
            Some(name) => preset_entries(name)?
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            None => BTreeMap::new(),
        };
        let mut r = Reader { entries, preset };

        let dim = r.count("domain.dim")?.unwrap_or(2);
        if dim != 2 && dim != 3 {
            return Err(ConfigError::InvalidValue {
                key: "domain.dim".into(),
                value: dim.to_string(),
                reason: "only 2 and 3 are supported".into(),
            });
        }
        let half_width = r.number("domain.half_width")?.unwrap_or(DEFAULT_HALF_WIDTH);
        let subdivisions = r.count("domain.subdivisions")?.unwrap_or(DEFAULT_SUBDIVISIONS);

        let anisotropy = r
            .get("anisotropy.density", |s| AnisotropySpec::parse(s).map_err(|e| e.to_string()))?
            .unwrap_or(AnisotropySpec::RegularizedL1 {
                delta: 0.01,
                rotation_deg: 0.0,
            });

        let kind = r
            .get("scheme.scheme", |s| {
                SchemeKind::from_name(s).ok_or_else(|| "unknown scheme".to_string())
            })?
            .ok_or(ConfigError::Missing("scheme.scheme"))?;
        let tau = r.number("scheme.tau")?.ok_or(ConfigError::Missing("scheme.tau"))?;
        let t_end = r.number("scheme.t_end")?.ok_or(ConfigError::Missing("scheme.t_end"))?;
        let mut scheme = SchemeConfig::new(kind, tau, t_end);
        let eps_inv = r.number("scheme.eps_inv")?;
        let eps = r.number("scheme.eps")?;
        scheme.eps_inv = match (eps_inv, eps) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Conflict("give either `eps` or `eps_inv`, not both".into()))
            }
            (_, Some(e)) => 1.0 / e,
            (Some(v), None) => v,
            (None, None) => DEFAULT_EPS_INV,
        };
        scheme.theta = r.number("scheme.theta")?.unwrap_or(scheme.theta);
        scheme.alpha = r.number("scheme.alpha")?.unwrap_or(scheme.alpha);
        scheme.mobility = r.get("scheme.mobility", parse_mobility)?.unwrap_or(scheme.mobility);
        let w_explicit = r.explicit("scheme.w_bdry");
        if let Some(w) = r.number("scheme.w_bdry")? {
            if kind != SchemeKind::CahnHilliardDirichlet {
                if w_explicit {
                    return Err(ConfigError::Conflict(
                        "`w_bdry` is only meaningful for scheme = cahn_hilliard_dirichlet".into(),
                    ));
                }
            } else {
                scheme.w_bdry = w;
            }
        }
        scheme.snapshot_every = r.count("scheme.snapshot_every")?.unwrap_or(0);
        scheme.implicit_potential = r.flag("scheme.implicit_potential")?.unwrap_or(false);
        let defaults = SolverOptions::default();
        scheme.solver = SolverOptions {
            tol: r.number("scheme.tol")?.unwrap_or(defaults.tol),
            max_sweeps: r.count("scheme.max_sweeps")?.unwrap_or(defaults.max_sweeps),
            max_active_set_updates: r
                .count("scheme.max_active_set_updates")?
                .unwrap_or(defaults.max_active_set_updates),
        };
        scheme
            .validate()
            .map_err(|e| ConfigError::Conflict(e.to_string()))?;

        let shape = r.raw("geometry.shape").unwrap_or_else(|| if dim == 2 { "circle" } else { "sphere" }.into());
        let center = r.list("geometry.center")?.unwrap_or(vec![0.0; dim]);
        let geometry = match shape.as_str() {
            "circle" | "sphere" => Geometry::Ball {
                center,
                radius: r.number("geometry.radius")?.unwrap_or(0.3),
            },
            "balls" => Geometry::Balls(
                r.get("geometry.balls", |s| parse_balls(s, dim))?
                    .ok_or(ConfigError::Missing("geometry.balls"))?,
            ),
            "cuboid" => Geometry::Cuboid {
                center,
                half_extents: r.list("geometry.half_extents")?.ok_or(ConfigError::Missing("geometry.half_extents"))?,
            },
            "uniform" => Geometry::Uniform(r.number("geometry.value")?.ok_or(ConfigError::Missing("geometry.value"))?),
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "geometry.shape".into(),
                    value: other.into(),
                    reason: "expected circle, sphere, balls, cuboid or uniform".into(),
                })
            }
        };

        let output = OutputConfig {
            dir: r.raw("output.dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("output")),
            vtk: r.flag("output.vtk")?.unwrap_or(true),
        };

        if let Some((key, _)) = r.entries.into_iter().next() {
            let (section, key) = key.split_once('.').unwrap_or(("", key.as_str()));
            return Err(ConfigError::UnknownKey {
                section: section.into(),
                key: key.into(),
            });
        }
        // preset keys that do not apply to the chosen shape are dropped silently

        let config = RunConfig {
            dim,
            half_width,
            subdivisions,
            anisotropy,
            scheme,
            geometry,
            output,
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::InvalidValue {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        if !(self.half_width > 0.0) {
            return Err(bad("domain.half_width", self.half_width.to_string(), "must be positive"));
        }
        if self.subdivisions == 0 {
            return Err(bad("domain.subdivisions", "0".into(), "must be positive"));
        }
        let aniso_ok = match self.dim {
            2 => self.anisotropy.build::<2>().map(|_| ()),
            _ => self.anisotropy.build::<3>().map(|_| ()),
        };
        aniso_ok.map_err(|e| bad("anisotropy.density", self.anisotropy.emit(), &e.to_string()))?;
        let geometry_ok = match &self.geometry {
            Geometry::Ball { center, radius } => center.len() == self.dim && *radius > 0.0,
            Geometry::Balls(b) => b.iter().all(|(c, r)| c.len() == self.dim && *r > 0.0),
            Geometry::Cuboid { center, half_extents } => {
                center.len() == self.dim && half_extents.len() == self.dim && half_extents.iter().all(|&h| h > 0.0)
            }
            Geometry::Uniform(v) => v.abs() <= 1.0,
        };
        if !geometry_ok {
            return Err(bad(
                "geometry",
                format!("{:?}", self.geometry),
                "does not match the dimension or has nonpositive size",
            ));
        }
        Ok(())
    }

    /// Canonical text form; [`RunConfig::parse`] of the result reproduces `self`.
    pub fn emit(&self) -> String {
        let s = &self.scheme;
        let mut out = String::new();
        let _ = writeln!(out, "[domain]");
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "half_width = {:?}", self.half_width);
        let _ = writeln!(out, "subdivisions = {}", self.subdivisions);
        let _ = writeln!(out, "\n[anisotropy]");
        let _ = writeln!(out, "density = {}", self.anisotropy.emit());
        let _ = writeln!(out, "\n[scheme]");
        let _ = writeln!(out, "scheme = {}", s.scheme.name());
        let _ = writeln!(out, "eps_inv = {:?}", s.eps_inv);
        let _ = writeln!(out, "theta = {:?}", s.theta);
        let _ = writeln!(out, "alpha = {:?}", s.alpha);
        let _ = writeln!(out, "mobility = {}", emit_mobility(&s.mobility));
        if s.scheme == SchemeKind::CahnHilliardDirichlet {
            let _ = writeln!(out, "w_bdry = {:?}", s.w_bdry);
        }
        let _ = writeln!(out, "tau = {:?}", s.tau);
        let _ = writeln!(out, "t_end = {:?}", s.t_end);
        let _ = writeln!(out, "snapshot_every = {}", s.snapshot_every);
        let _ = writeln!(out, "implicit_potential = {}", s.implicit_potential);
        let _ = writeln!(out, "tol = {:?}", s.solver.tol);
        let _ = writeln!(out, "max_sweeps = {}", s.solver.max_sweeps);
        let _ = writeln!(out, "max_active_set_updates = {}", s.solver.max_active_set_updates);
        let _ = writeln!(out, "\n[geometry]");
        match &self.geometry {
            Geometry::Ball { center, radius } => {
                let _ = writeln!(out, "shape = {}", if center.len() == 2 { "circle" } else { "sphere" });
                let _ = writeln!(out, "center = {}", join(center));
                let _ = writeln!(out, "radius = {radius:?}");
            }
            Geometry::Balls(balls) => {
                let _ = writeln!(out, "shape = balls");
                let body: Vec<String> = balls
                    .iter()
                    .map(|(c, r)| {
                        let mut v = c.clone();
                        v.push(*r);
                        join(&v)
                    })
                    .collect();
                let _ = writeln!(out, "balls = {}", body.join("; "));
            }
            Geometry::Cuboid { center, half_extents } => {
                let _ = writeln!(out, "shape = cuboid");
                let _ = writeln!(out, "center = {}", join(center));
                let _ = writeln!(out, "half_extents = {}", join(half_extents));
            }
            Geometry::Uniform(v) => {
                let _ = writeln!(out, "shape = uniform");
                let _ = writeln!(out, "value = {v:?}");
            }
        }
        let _ = writeln!(out, "\n[output]");
        let _ = writeln!(out, "dir = {}", self.output.dir.display());
        let _ = writeln!(out, "vtk = {}", self.output.vtk);
        out
    }
}

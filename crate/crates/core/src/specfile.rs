//! TOML puzzle files.
//!
//! Connection entries use 1-based bundle indices (`"omega.1.2"`), solder
//! entries use 1-based components and 0-based, strictly increasing
//! coordinate multi-indices (`"phi.1" = { "0,2" = "x*y" }`).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::bundle::{BundleValuedForm, ConnectionForms, FiberMetric};
use crate::error::Error;
use crate::expr::Expr;
use crate::forms::{Chart, DifferentialForm, VectorField};
use crate::palatini::Quadrature;
use crate::puzzle::{torsion_free_connection, Puzzle, RankClass};
use crate::solderint::{DirectionSelector, SliceSpec, SurfaceFamily};
use crate::symbolic::ExprMatrix;

/// Metric-compatibility defects above this value raise a load warning.
pub const METRIC_WARNING_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Key {
        line: usize,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: Option<String>,
    description: Option<String>,
    chart: RawChart,
    bundle: RawBundle,
    #[serde(default)]
    connection: toml::Table,
    solder: toml::Table,
    #[serde(default)]
    expect: Expectations,
    #[serde(default)]
    frobenius: Vec<RawFrobenius>,
    #[serde(default)]
    transport: Vec<RawTransport>,
    slice: Option<BTreeMap<String, f64>>,
    leaf: Option<RawLeaf>,
    embed: Option<RawEmbed>,
    #[serde(default)]
    observable: Vec<RawObservable>,
    yangmills: Option<RawYangMills>,
    palatini: Option<RawPalatini>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    dim: usize,
    coords: Vec<String>,
    domain: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    rank: usize,
    metric: Option<RawMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawMatrix {
    Named(String),
    Entries(Vec<Vec<String>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrobenius {
    x: Vec<String>,
    y: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransport {
    gamma: Vec<String>,
    t: Option<[f64; 2]>,
    s: Option<[f64; 2]>,
    #[serde(default)]
    in_leaf: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeaf {
    #[serde(default = "default_seed_count")]
    seeds: usize,
    toward: Option<Vec<f64>>,
    #[serde(default = "default_leaf_steps")]
    steps: usize,
    #[serde(default = "default_leaf_step")]
    step: f64,
    #[serde(default)]
    transversal: Vec<Vec<String>>,
}

fn default_seed_count() -> usize {
    10
}

fn default_leaf_steps() -> usize {
    20
}

fn default_leaf_step() -> f64 {
    0.02
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmbed {
    completion: Option<Vec<Vec<String>>>,
    domain: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    alpha: String,
    solvable: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawYangMills {
    metric: RawMatrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPalatini {
    domain: Vec<[f64; 2]>,
    #[serde(default = "default_nodes")]
    nodes: usize,
}

fn default_nodes() -> usize {
    6
}

/// Declared outcomes that `report-all` checks against.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    /// One of `isomorphism`, `injective`, `surjective`, `constant`.
    pub rank: Option<String>,
    pub kernel_dim: Option<usize>,
    /// Whether the Palatini residual and the Einstein tensor vanish.
    pub vacuum: Option<bool>,
}

impl Expectations {
    pub fn rank_matches(&self, class: &RankClass) -> bool {
        match self.rank.as_deref() {
            None => true,
            Some("isomorphism") => matches!(class, RankClass::Isomorphism),
            Some("injective") => matches!(class, RankClass::Injective),
            Some("surjective") => matches!(class, RankClass::Surjective),
            Some("constant") => !matches!(class, RankClass::Variable),
            Some(_) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransportSpec {
    pub gamma: SurfaceFamily,
    /// `γ(·, 0)` runs inside a leaf, so the table should vanish.
    pub in_leaf: bool,
}

#[derive(Debug, Clone)]
pub struct LeafSpec {
    pub seeds: Vec<Vec<f64>>,
    pub direction: DirectionSelector,
    pub steps: usize,
    pub step: f64,
    pub transversal: Vec<VectorField>,
}

#[derive(Debug, Clone)]
pub struct EmbedSpec {
    pub completion: Option<Vec<Vec<Expr>>>,
    /// Sampling box for the embedding checks.
    pub domain: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ObservableSpec {
    pub text: String,
    pub alpha: Expr,
    pub solvable: Option<bool>,
}

/// A validated puzzle file.
#[derive(Debug, Clone)]
pub struct PuzzleSpec {
    pub name: String,
    pub description: Option<String>,
    pub puzzle: Puzzle,
    /// Metric-compatibility defect when it exceeds [`METRIC_WARNING_TOL`].
    pub metric_warning: Option<f64>,
    pub expect: Expectations,
    pub frobenius: Vec<(VectorField, VectorField)>,
    pub transport: Vec<TransportSpec>,
    pub slice: Option<SliceSpec>,
    pub leaf: Option<LeafSpec>,
    pub embed: Option<EmbedSpec>,
    pub observables: Vec<ObservableSpec>,
    pub yang_mills: Option<ExprMatrix>,
    pub palatini: Option<Quadrature>,
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the first occurrence of `key`, or 1.
fn line_of(src: &str, key: &str) -> usize {
    src.find(key).map(|o| line_at(src, o)).unwrap_or(1)
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> SpecError {
        let line = line_of(self.src, key);
        SpecError::Key {
            line,
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn expr(&self, chart: &Arc<Chart>, key: &str, text: &str) -> Result<Expr, SpecError> {
        chart.parse(text).map_err(|e| {
            let line = line_of(self.src, text);
            SpecError::Key {
                line,
                key: key.to_string(),
                message: format!("cannot parse expression `{text}`: {e}"),
            }
        })
    }

    fn matrix(
        &self,
        chart: &Arc<Chart>,
        key: &str,
        raw: &RawMatrix,
        n: usize,
    ) -> Result<ExprMatrix, SpecError> {
        match raw {
            RawMatrix::Named(s) if s == "identity" => Ok(ExprMatrix::identity(n)),
            RawMatrix::Named(s) => Err(self.err(
                key,
                format!("unknown matrix `{s}`, expected `identity` or rows"),
            )),
            RawMatrix::Entries(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(self.err(key, format!("expected a {n}x{n} matrix")));
                }
                let mut out = Vec::with_capacity(n);
                for row in rows {
                    out.push(
                        row.iter()
                            .map(|e| self.expr(chart, key, e))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                Ok(ExprMatrix::from_rows(out))
            }
        }
    }
}

/// Flatten nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) if !key.starts_with("phi.") => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

fn parse_index(s: &str, count: usize) -> Option<usize> {
    s.trim()
        .parse::<usize>()
        .ok()
        .filter(|&i| i >= 1 && i <= count)
        .map(|i| i - 1)
}

pub fn load_puzzle(path: impl AsRef<Path>) -> Result<PuzzleSpec, SpecError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("puzzle");
    parse_puzzle(&src, stem)
}

/// Parse a puzzle file; `default_name` is used when the file has no `name`.
pub fn parse_puzzle(src: &str, default_name: &str) -> Result<PuzzleSpec, SpecError> {
    let raw: RawSpec = toml::from_str(src).map_err(|e| SpecError::Syntax {
        line: e.span().map(|s| line_at(src, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let cx = Ctx { src };

    let rc = &raw.chart;
    if rc.coords.len() != rc.dim || rc.domain.len() != rc.dim {
        return Err(cx.err(
            "chart",
            format!(
                "dim = {} but {} coords and {} domain intervals",
                rc.dim,
                rc.coords.len(),
                rc.domain.len()
            ),
        ));
    }
    let chart = Chart::new(
        rc.coords.clone(),
        rc.domain.iter().map(|d| (d[0], d[1])).collect(),
    )
    .map_err(|e| cx.err("chart", e.to_string()))?;
    let m = chart.dim();
    let n = raw.bundle.rank;
    if n == 0 {
        return Err(cx.err("rank", "bundle rank must be positive"));
    }

    let metric = match &raw.bundle.metric {
        Some(rm) => {
            let g = cx.matrix(&chart, "metric", rm, n)?;
            Some(FiberMetric::new(&chart, g).map_err(|e| cx.err("metric", e.to_string()))?)
        }
        None => None,
    };

    // Solder form.
    let mut solder_keys = BTreeMap::new();
    flatten("", &raw.solder, &mut solder_keys);
    let degree = match solder_keys.remove("degree") {
        Some(toml::Value::Integer(d)) if d >= 1 && (d as usize) <= m => d as usize,
        Some(_) => {
            return Err(cx.err(
                "degree",
                format!("solder degree must be an integer in 1..={m}"),
            ))
        }
        None => return Err(cx.err("solder", "missing `degree`")),
    };
    let mut components = vec![DifferentialForm::zero(&chart, degree); n];
    for (key, value) in &solder_keys {
        let i = key
            .strip_prefix("phi.")
            .and_then(|s| parse_index(s, n))
            .ok_or_else(|| cx.err(key, format!("expected `phi.i` with 1 <= i <= {n}")))?;
        let table = value
            .as_table()
            .ok_or_else(|| cx.err(key, "expected a table of multi-index keys"))?;
        let mut terms = Vec::new();
        for (mi, e) in table {
            let idx: Vec<usize> = mi
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| cx.err(key, format!("bad multi-index `{mi}`")))?;
            if idx.len() != degree
                || idx.windows(2).any(|w| w[0] >= w[1])
                || idx.iter().any(|&a| a >= m)
            {
                return Err(cx.err(
                    key,
                    format!("multi-index `{mi}` must have {degree} strictly increasing entries below {m}"),
                ));
            }
            let text = e
                .as_str()
                .ok_or_else(|| cx.err(key, format!("entry `{mi}` must be a string")))?;
            terms.push((idx, cx.expr(&chart, &format!("{key}[{mi}]"), text)?));
        }
        components[i] = DifferentialForm::from_terms(&chart, degree, terms)?;
    }
    let solder = BundleValuedForm::new(&chart, degree, components)?;

    // Connection.
    let mut conn_keys = BTreeMap::new();
    flatten("", &raw.connection, &mut conn_keys);
    let torsion_free = match conn_keys.remove("torsion_free") {
        Some(toml::Value::Boolean(b)) => b,
        Some(_) => return Err(cx.err("torsion_free", "expected a boolean")),
        None => false,
    };
    let connection = if torsion_free {
        if !conn_keys.is_empty() {
            return Err(cx.err("torsion_free", "cannot combine with explicit omega entries"));
        }
        let g = metric
            .clone()
            .unwrap_or_else(|| FiberMetric::identity(&chart, n));
        torsion_free_connection(&solder, &g).map_err(|e| cx.err("torsion_free", e.to_string()))?
    } else {
        let mut coeffs = vec![vec![vec![Expr::zero(); m]; n]; n];
        for (key, value) in &conn_keys {
            let parts: Vec<&str> = key.split('.').collect();
            let (i, j) = match parts.as_slice() {
                ["omega", i, j] => (parse_index(i, n), parse_index(j, n)),
                _ => return Err(cx.err(key, "expected `omega.i.j` or `torsion_free`")),
            };
            let (i, j) = i.zip(j).ok_or_else(|| {
                cx.err(
                    key,
                    format!("bundle index out of range for rank {n} (indices are 1-based)"),
                )
            })?;
            let list = value
                .as_array()
                .ok_or_else(|| cx.err(key, "expected a list of coefficients"))?;
            if list.len() != m {
                return Err(cx.err(
                    key,
                    format!("expected {m} coefficients, found {}", list.len()),
                ));
            }
            for (a, e) in list.iter().enumerate() {
                let text = e
                    .as_str()
                    .ok_or_else(|| cx.err(key, "coefficients must be strings"))?;
                coeffs[i][j][a] = cx.expr(&chart, key, text)?;
            }
        }
        ConnectionForms::from_coefficients(&chart, &coeffs)?
    };

    let puzzle = Puzzle::new(connection, solder, metric)?;
    let metric_warning = puzzle
        .metric_defect(&chart.seeded_samples(20, 0x5eed))?
        .filter(|&d| d > METRIC_WARNING_TOL);

    let field = |key: &str, comps: &[String]| -> Result<VectorField, SpecError> {
        if comps.len() != m {
            return Err(cx.err(key, format!("vector field needs {m} components")));
        }
        let e = comps
            .iter()
            .map(|c| cx.expr(&chart, key, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorField::new(&chart, e)?)
    };

    let frobenius = raw
        .frobenius
        .iter()
        .map(|f| Ok((field("frobenius", &f.x)?, field("frobenius", &f.y)?)))
        .collect::<Result<Vec<_>, SpecError>>()?;

    let transport = raw
        .transport
        .iter()
        .map(|t| {
            if t.gamma.len() != m {
                return Err(cx.err("gamma", format!("surface needs {m} components")));
            }
            let texts: Vec<&str> = t.gamma.iter().map(String::as_str).collect();
            let dom = [
                t.t.map(|d| (d[0], d[1])).unwrap_or((-1.0, 1.0)),
                t.s.map(|d| (d[0], d[1])).unwrap_or((-1.0, 1.0)),
            ];
            let gamma = SurfaceFamily::parse_on(&chart, &texts, dom)
                .map_err(|e| cx.err("gamma", e.to_string()))?;
            Ok(TransportSpec {
                gamma,
                in_leaf: t.in_leaf,
            })
        })
        .collect::<Result<Vec<_>, SpecError>>()?;

    let slice = match &raw.slice {
        Some(map) => {
            let mut fixed = Vec::new();
            for (name, &v) in map {
                let c = chart
                    .names()
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| cx.err(name, "slice coordinate is not a chart coordinate"))?;
                fixed.push((c, v));
            }
            fixed.sort_by_key(|f| f.0);
            Some(SliceSpec { fixed })
        }
        None => None,
    };

    let leaf = match &raw.leaf {
        Some(l) => {
            let inner: Vec<(f64, f64)> = chart
                .domain()
                .iter()
                .map(|&(lo, hi)| (lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo)))
                .collect();
            let seeds = Chart::new(chart.names().to_vec(), inner)?.seeded_samples(l.seeds, 0x1eaf);
            let direction = match &l.toward {
                Some(v) if v.len() == m => DirectionSelector::Toward(v.clone()),
                Some(_) => return Err(cx.err("toward", format!("needs {m} components"))),
                None => DirectionSelector::Basis(0),
            };
            let transversal = l
                .transversal
                .iter()
                .map(|v| field("transversal", v))
                .collect::<Result<Vec<_>, _>>()?;
            Some(LeafSpec {
                seeds,
                direction,
                steps: l.steps,
                step: l.step,
                transversal,
            })
        }
        None => None,
    };

    let embed = match &raw.embed {
        Some(e) => {
            let completion = match &e.completion {
                Some(rows) => Some(
                    rows.iter()
                        .map(|r| {
                            if r.len() != n {
                                return Err(cx.err(
                                    "completion",
                                    format!("completion vectors need {n} components"),
                                ));
                            }
                            r.iter()
                                .map(|c| cx.expr(&chart, "completion", c))
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            let domain = match &e.domain {
                Some(d) if d.len() == m => d.iter().map(|x| (x[0], x[1])).collect(),
                Some(_) => return Err(cx.err("embed", format!("embed domain needs {m} intervals"))),
                None => chart.domain().to_vec(),
            };
            Some(EmbedSpec { completion, domain })
        }
        None => None,
    };

    let observables = raw
        .observable
        .iter()
        .map(|o| {
            Ok(ObservableSpec {
                text: o.alpha.clone(),
                alpha: cx.expr(&chart, "alpha", &o.alpha)?,
                solvable: o.solvable,
            })
        })
        .collect::<Result<Vec<_>, SpecError>>()?;

    let yang_mills = match &raw.yangmills {
        Some(y) => Some(cx.matrix(&chart, "yangmills.metric", &y.metric, m)?),
        None => None,
    };

    let palatini = match &raw.palatini {
        Some(pl) => {
            if pl.domain.len() != m {
                return Err(cx.err("palatini", format!("integration box needs {m} intervals")));
            }
            Some(Quadrature {
                domain: pl.domain.iter().map(|d| (d[0], d[1])).collect(),
                nodes: pl.nodes,
            })
        }
        None => None,
    };

    Ok(PuzzleSpec {
        name: raw.name.unwrap_or_else(|| default_name.to_string()),
        description: raw.description,
        puzzle,
        metric_warning,
        expect: raw.expect,
        frobenius,
        transport,
        slice,
        leaf,
        embed,
        observables,
        yang_mills,
        palatini,
    })
}

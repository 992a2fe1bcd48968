//! Surjective-case machinery: the two-parameter identity along immersed
//! surfaces, the homogeneous transport system, leaf flows, parallel frames
//! along leaves, and the leaf-space quotient.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bundle::{BundleValuedForm, ConnectionForms, FiberMetric};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::{check_chart, Chart, ChartMap, DifferentialForm, VectorField};
use crate::puzzle::{null_space, numerical_rank, rank_profile, Puzzle, RankClass};

/// Two-parameter family `γ(t, s)` in a chart; the source chart is `(t, s)`.
#[derive(Debug, Clone)]
pub struct SurfaceFamily {
    map: ChartMap,
}

impl SurfaceFamily {
    pub fn new(
        target: &Arc<Chart>,
        components: Vec<Expr>,
        domain: [(f64, f64); 2],
    ) -> Result<Self> {
        let params = Chart::new(vec!["t", "s"], domain.to_vec())?;
        let map = ChartMap::new(&params, target, components)?;
        let mut probes = params.seeded_samples(200, 0x5f);
        for &t in &[domain[0].0, domain[0].1] {
            for &s in &[domain[1].0, domain[1].1] {
                probes.push(vec![t, s]);
            }
        }
        for p in &probes {
            let y = map.eval(p)?;
            if !target.contains(&y) {
                return Err(Error::OutOfDomain { point: y });
            }
        }
        Ok(SurfaceFamily { map })
    }

    /// Components written in the variables `t` and `s`, on `[−1, 1]²`.
    pub fn parse(target: &Arc<Chart>, components: &[&str]) -> Result<Self> {
        Self::parse_on(target, components, [(-1.0, 1.0), (-1.0, 1.0)])
    }

    pub fn parse_on(
        target: &Arc<Chart>,
        components: &[&str],
        domain: [(f64, f64); 2],
    ) -> Result<Self> {
        let vars = ["t", "s"];
        let comps = components
            .iter()
            .map(|c| crate::expr::parse_expr(c, &vars).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        SurfaceFamily::new(target, comps, domain)
    }

    pub fn map(&self) -> &ChartMap {
        &self.map
    }

    pub fn params(&self) -> &Arc<Chart> {
        self.map.source()
    }

    /// Whether `∂γ/∂t, ∂γ/∂s` are independent at every given parameter point.
    pub fn is_immersion(&self, params: &[Vec<f64>]) -> Result<bool> {
        let jac = self.map.jacobian();
        for p in params {
            if numerical_rank(&jac.eval(p)?) < 2 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Pulled-back `φ^i` and `ω^i_j` split into `dt` and `ds` coefficients.
struct SurfacePullback {
    phi_t: Vec<Expr>,
    phi_s: Vec<Expr>,
    omega_t: Vec<Expr>,
    omega_s: Vec<Expr>,
    n: usize,
}

fn surface_pullback(p: &Puzzle, gamma: &SurfaceFamily) -> Result<SurfacePullback> {
    check_chart(p.chart(), gamma.map.target(), "surface family")?;
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "surface identities need a solder 1-form".into(),
        ));
    }
    let phi = p.solder().pullback(&gamma.map)?;
    let omega = p.connection().pullback(&gamma.map)?;
    let n = p.rank();
    Ok(SurfacePullback {
        phi_t: (0..n).map(|i| phi.component(i).coefficient(&[0])).collect(),
        phi_s: (0..n).map(|i| phi.component(i).coefficient(&[1])).collect(),
        omega_t: omega
            .forms()
            .entries()
            .iter()
            .map(|w| w.coefficient(&[0]))
            .collect(),
        omega_s: omega
            .forms()
            .entries()
            .iter()
            .map(|w| w.coefficient(&[1]))
            .collect(),
        n,
    })
}

/// `∂_t(φ^i(γ_s)) + ω^i_j(γ_t)φ^j(γ_s) − ∂_s(φ^i(γ_t)) − ω^i_j(γ_s)φ^j(γ_t)`
/// at each `(t, s)` in `grid`, by exact differentiation.
pub fn identity_residual(
    p: &Puzzle,
    gamma: &SurfaceFamily,
    grid: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let sp = surface_pullback(p, gamma)?;
    let n = sp.n;
    let lhs: Vec<Expr> = (0..n)
        .map(|i| {
            let mut acc = sp.phi_s[i].diff(0);
            for j in 0..n {
                acc = Expr::add(&acc, &Expr::mul(&sp.omega_t[i * n + j], &sp.phi_s[j]));
            }
            acc
        })
        .collect();
    let rhs: Vec<Expr> = (0..n)
        .map(|i| {
            let mut acc = sp.phi_t[i].diff(1);
            for j in 0..n {
                acc = Expr::add(&acc, &Expr::mul(&sp.omega_s[i * n + j], &sp.phi_t[j]));
            }
            acc
        })
        .collect();
    grid.iter()
        .map(|ts| {
            (0..n)
                .map(|i| Ok(lhs[i].eval(ts)? - rhs[i].eval(ts)?))
                .collect()
        })
        .collect()
}

/// Values `f^i(t_a, s_b)` on a rectangular grid.
#[derive(Debug, Clone)]
pub struct TransportTable {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `values[a][b]` is the vector at `(t[a], s[b])`.
    pub values: Vec<Vec<DVector<f64>>>,
    /// Step in `s`.
    pub step: f64,
}

impl TransportTable {
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|v| v.amax())
            .fold(0.0, f64::max)
    }

    pub fn max_diff(&self, other: &TransportTable) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

fn grid_nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

/// `s` nodes: `0` (clamped into the interval) out to both ends, `steps` RK4
/// steps on each side.
fn s_nodes(lo: f64, hi: f64, steps: usize) -> (Vec<f64>, usize, f64) {
    let s0 = 0.0f64.clamp(lo, hi);
    let span = (hi - s0).max(s0 - lo);
    let h = span / steps as f64;
    let back = ((s0 - lo) / h).round() as usize;
    let fwd = ((hi - s0) / h).round() as usize;
    let nodes = (0..=back + fwd)
        .map(|k| s0 + (k as f64 - back as f64) * h)
        .collect();
    (nodes, back, h)
}

/// RK4 solution of `∂_s f^i = −ω^i_j(∂γ/∂s) f^j` from `f(t, 0) = φ(∂γ/∂t)`.
pub fn integrate_transport_system(
    p: &Puzzle,
    gamma: &SurfaceFamily,
    t_nodes: usize,
    steps: usize,
) -> Result<TransportTable> {
    let init = |sp: &SurfacePullback, t: f64, s: f64| -> Result<DVector<f64>> {
        let v: Vec<f64> = sp
            .phi_t
            .iter()
            .map(|e| e.eval(&[t, s]))
            .collect::<Result<_, _>>()?;
        Ok(DVector::from_vec(v))
    };
    integrate_with_initial(p, gamma, t_nodes, steps, init)
}

/// Same system with caller-chosen initial rows `f(t, 0) = init(t)`.
pub fn integrate_transport_from(
    p: &Puzzle,
    gamma: &SurfaceFamily,
    t_nodes: usize,
    steps: usize,
    init: impl Fn(f64) -> Vec<f64>,
) -> Result<TransportTable> {
    integrate_with_initial(p, gamma, t_nodes, steps, |_, t, _| {
        Ok(DVector::from_vec(init(t)))
    })
}

fn integrate_with_initial(
    p: &Puzzle,
    gamma: &SurfaceFamily,
    t_nodes: usize,
    steps: usize,
    init: impl Fn(&SurfacePullback, f64, f64) -> Result<DVector<f64>>,
) -> Result<TransportTable> {
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    let sp = surface_pullback(p, gamma)?;
    let n = sp.n;
    let dom = gamma.params().domain();
    let t = grid_nodes(dom[0].0, dom[0].1, t_nodes);
    let (s, origin, h) = s_nodes(dom[1].0, dom[1].1, steps);
    let generator = |t: f64, s: f64| -> Result<DMatrix<f64>> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = -sp.omega_s[i * n + j].eval(&[t, s])?;
            }
        }
        Ok(a)
    };
    let mut values = Vec::with_capacity(t.len());
    for &tv in &t {
        let mut row = vec![DVector::zeros(n); s.len()];
        row[origin] = init(&sp, tv, s[origin])?;
        for dir in [1.0f64, -1.0] {
            let mut k = origin;
            loop {
                let next = if dir > 0.0 { k + 1 } else { k.wrapping_sub(1) };
                if next >= s.len() {
                    break;
                }
                let hh = dir * h;
                let v = &row[k];
                let s0 = s[k];
                let a0 = generator(tv, s0)?;
                let am = generator(tv, s0 + 0.5 * hh)?;
                let a1 = generator(tv, s0 + hh)?;
                let k1 = &a0 * v;
                let k2 = &am * (v + &k1 * (0.5 * hh));
                let k3 = &am * (v + &k2 * (0.5 * hh));
                let k4 = &a1 * (v + &k3 * hh);
                row[next] = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hh / 6.0);
                k = next;
            }
        }
        values.push(row);
    }
    Ok(TransportTable {
        t,
        s,
        values,
        step: h,
    })
}

/// Direct evaluation of `φ^i(∂γ/∂t)` on the grid used by the transport system.
pub fn direct_table(
    p: &Puzzle,
    gamma: &SurfaceFamily,
    t_nodes: usize,
    steps: usize,
) -> Result<TransportTable> {
    let sp = surface_pullback(p, gamma)?;
    let dom = gamma.params().domain();
    let t = grid_nodes(dom[0].0, dom[0].1, t_nodes);
    let (s, _, h) = s_nodes(dom[1].0, dom[1].1, steps);
    let values = t
        .iter()
        .map(|&tv| {
            s.iter()
                .map(|&sv| {
                    let v: Vec<f64> = sp
                        .phi_t
                        .iter()
                        .map(|e| e.eval(&[tv, sv]))
                        .collect::<Result<_, _>>()?;
                    Ok(DVector::from_vec(v))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransportTable {
        t,
        s,
        values,
        step: h,
    })
}

/// How the flow picks a direction inside the kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionSelector {
    /// The given basis vector of `K` at the seed.
    Basis(usize),
    /// The projection of a fixed vector onto `K`.
    Toward(Vec<f64>),
}

#[derive(Debug, Clone, Serialize)]
pub struct LeafTrace {
    pub seed: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub step: f64,
    /// The flow stopped early at the chart boundary.
    pub truncated: bool,
}

impl LeafTrace {
    /// Max of `|φ(Δx/step)|` over consecutive pairs, evaluated at midpoints.
    pub fn solder_defect(&self, p: &Puzzle) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in self.points.windows(2) {
            let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let vel: Vec<f64> = w[0]
                .iter()
                .zip(&w[1])
                .map(|(a, b)| (b - a) / self.step)
                .collect();
            worst = worst.max(p.solder().apply(&mid, &vel)?.amax());
        }
        Ok(worst)
    }
}

fn kernel_basis(p: &Puzzle, x: &[f64], expected: usize) -> Result<DMatrix<f64>> {
    let k = null_space(&p.solder_map(x)?);
    if k.len() != expected {
        return Err(Error::KernelDimensionChanged {
            from: expected,
            to: k.len(),
            point: x.to_vec(),
        });
    }
    Ok(DMatrix::from_columns(&k))
}

/// Unit vector of `K_x` closest to `reference`.
fn kernel_direction(
    p: &Puzzle,
    x: &[f64],
    expected: usize,
    reference: &DVector<f64>,
) -> Result<DVector<f64>> {
    let k = kernel_basis(p, x, expected)?;
    let v = &k * (k.transpose() * reference);
    let norm = v.norm();
    if norm < 1e-12 {
        return Err(Error::Precondition(
            "flow direction became orthogonal to the kernel".into(),
        ));
    }
    Ok(v / norm)
}

/// RK4 flow along a continuously selected unit kernel vector.
pub fn leaf_flow(
    p: &Puzzle,
    seed: &[f64],
    direction: &DirectionSelector,
    steps: usize,
    step: f64,
) -> Result<LeafTrace> {
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "leaf flow needs a solder 1-form".into(),
        ));
    }
    let k0 = null_space(&p.solder_map(seed)?);
    if k0.is_empty() {
        return Err(Error::Precondition("kernel dimension 0 at the seed".into()));
    }
    let dim = k0.len();
    let mut reference = match direction {
        DirectionSelector::Basis(i) => k0.get(*i).cloned().ok_or_else(|| {
            Error::InvalidIndex(format!("kernel basis index {i} out of range 0..{dim}"))
        })?,
        DirectionSelector::Toward(v) => DVector::from_column_slice(v),
    };
    let chart = p.chart();
    let mut x = DVector::from_column_slice(seed);
    let mut points = vec![seed.to_vec()];
    let mut truncated = false;
    for _ in 0..steps {
        let f = |y: &DVector<f64>, r: &DVector<f64>| kernel_direction(p, y.as_slice(), dim, r);
        let k1 = f(&x, &reference)?;
        let k2 = f(&(&x + &k1 * (0.5 * step)), &k1)?;
        let k3 = f(&(&x + &k2 * (0.5 * step)), &k2)?;
        let k4 = f(&(&x + &k3 * step), &k3)?;
        let next = &x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (step / 6.0);
        if !chart.contains(next.as_slice()) {
            truncated = true;
            break;
        }
        reference = k4;
        x = next;
        points.push(x.as_slice().to_vec());
    }
    Ok(LeafTrace {
        seed: seed.to_vec(),
        points,
        step,
        truncated,
    })
}

/// Max over the trace of `|∇_ξ φ(X_a)|`, `ξ` the unit kernel direction.
pub fn parallel_frame_residual(
    p: &Puzzle,
    leaf: &LeafTrace,
    transversal: &[VectorField],
) -> Result<f64> {
    let n = p.rank();
    let m = p.chart().dim();
    let sections: Vec<Vec<Expr>> = transversal
        .iter()
        .map(|x| -> Result<Vec<Expr>> {
            check_chart(p.chart(), x.chart(), "transversal field")?;
            p.solder()
                .components()
                .iter()
                .map(|c| Ok(c.interior_product(x)?.coefficient(&[])))
                .collect()
        })
        .collect::<Result<_>>()?;
    let gradients: Vec<Vec<Vec<Expr>>> = sections
        .iter()
        .map(|sec| {
            sec.iter()
                .map(|e| (0..m).map(|b| e.diff(b)).collect())
                .collect()
        })
        .collect();
    let dim = null_space(&p.solder_map(&leaf.seed)?).len();
    let mut reference = DVector::zeros(m);
    if let Some(w) = leaf.points.windows(2).next() {
        reference = DVector::from_iterator(m, w[0].iter().zip(&w[1]).map(|(a, b)| b - a));
    }
    let mut worst: f64 = 0.0;
    for x in &leaf.points {
        let xi = kernel_direction(p, x, dim, &reference)?;
        reference = xi.clone();
        let w = p.connection().eval_on(x, xi.as_slice())?;
        for (sec, grad) in sections.iter().zip(&gradients) {
            let sigma = DVector::from_iterator(
                n,
                sec.iter()
                    .map(|e| e.eval(x))
                    .collect::<Result<Vec<_>, _>>()?,
            );
            let mut d = &w * &sigma;
            for i in 0..n {
                for b in 0..m {
                    d[i] += grad[i][b].eval(x)? * xi[b];
                }
            }
            worst = worst.max(d.amax());
        }
    }
    Ok(worst)
}

/// Transversal slice `{x^c = value}` for a set of fixed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceSpec {
    pub fixed: Vec<(usize, f64)>,
}

/// Result of projecting a point to the slice along its leaf.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Quotient coordinates of the leaf.
    pub q: Vec<f64>,
    /// Point where the leaf meets the slice.
    pub foot: Vec<f64>,
    /// Parallel transport from the point to the foot; `Φ(x) = U⁻¹` is the
    /// parallel frame at the point.
    pub transport: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct QuotientPuzzle {
    puzzle: Puzzle,
    slice: ChartMap,
    spec: SliceSpec,
    free: Vec<usize>,
    kernel_dim: usize,
}

/// Worst-case discrepancy of the `Q`-pull-back against the original data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PullbackDefect {
    pub omega: f64,
    pub phi: f64,
    pub metric: Option<f64>,
}

impl PullbackDefect {
    pub fn max(&self) -> f64 {
        self.omega.max(self.phi).max(self.metric.unwrap_or(0.0))
    }
}

const FLOW_STEPS: usize = 128;
const POLISH_ROUNDS: usize = 6;
const FD_STEP: f64 = 1e-3;

impl QuotientPuzzle {
    pub fn puzzle(&self) -> &Puzzle {
        &self.puzzle
    }

    /// Embedding of the quotient chart as the slice in the original chart.
    pub fn slice(&self) -> &ChartMap {
        &self.slice
    }

    pub fn spec(&self) -> &SliceSpec {
        &self.spec
    }

    fn defect(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.spec.fixed.len(),
            self.spec.fixed.iter().map(|&(c, v)| x[c] - v),
        )
    }

    /// `Q(x)` together with the transport along the leaf path to the slice.
    pub fn project(&self, original: &Puzzle, x: &[f64]) -> Result<Projection> {
        let chart = original.chart();
        let k = self.kernel_dim;
        let mut pos = DVector::from_column_slice(x);
        let mut transport = DMatrix::identity(original.rank(), original.rank());
        let velocity = |y: &DVector<f64>, h0: &DVector<f64>| -> Result<DVector<f64>> {
            let kb = kernel_basis(original, y.as_slice(), k)?;
            let bk = DMatrix::from_fn(k, k, |r, c| kb[(self.spec.fixed[r].0, c)]);
            let lu = bk.lu();
            let coeff = lu.solve(h0).ok_or_else(|| Error::Singular {
                what: "slice (not transverse to the kernel)".into(),
                point: y.as_slice().to_vec(),
            })?;
            Ok(-(kb * coeff))
        };
        let tolerance = 1e-15 * (1.0 + pos.amax());
        for _ in 0..POLISH_ROUNDS {
            let h0 = self.defect(&pos);
            if h0.amax() <= tolerance {
                break;
            }
            let dt = 1.0 / FLOW_STEPS as f64;
            for _ in 0..FLOW_STEPS {
                let k1 = velocity(&pos, &h0)?;
                let k2 = velocity(&(&pos + &k1 * (0.5 * dt)), &h0)?;
                let k3 = velocity(&(&pos + &k2 * (0.5 * dt)), &h0)?;
                let k4 = velocity(&(&pos + &k3 * dt), &h0)?;
                // The transport generator uses the same stage velocities.
                let a = |y: &DVector<f64>, v: &DVector<f64>| -> Result<DMatrix<f64>> {
                    Ok(-original.connection().eval_on(y.as_slice(), v.as_slice())?)
                };
                let u = &transport;
                let m1 = a(&pos, &k1)? * u;
                let m2 = a(&(&pos + &k1 * (0.5 * dt)), &k2)? * (u + &m1 * (0.5 * dt));
                let m3 = a(&(&pos + &k2 * (0.5 * dt)), &k3)? * (u + &m2 * (0.5 * dt));
                let m4 = a(&(&pos + &k3 * dt), &k4)? * (u + &m3 * dt);
                transport = u + (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (dt / 6.0);
                pos += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                if !chart.contains(pos.as_slice()) {
                    return Err(Error::OutOfDomain {
                        point: pos.as_slice().to_vec(),
                    });
                }
            }
        }
        let q = self.free.iter().map(|&c| pos[c]).collect();
        Ok(Projection {
            q,
            foot: pos.as_slice().to_vec(),
            transport,
        })
    }

    /// Compare `Q*ω̄, Q*φ̄, Q*ḡ` with `ω, φ, g` written in the parallel frame.
    /// Derivatives of `Q` and of the frame use a five-point stencil.
    pub fn pullback_defect(
        &self,
        original: &Puzzle,
        points: &[Vec<f64>],
    ) -> Result<PullbackDefect> {
        let m = original.chart().dim();
        let n = original.rank();
        let mq = self.free.len();
        let mut out = PullbackDefect {
            omega: 0.0,
            phi: 0.0,
            metric: original.metric().map(|_| 0.0),
        };
        for x in points {
            let base = self.project(original, x)?;
            let u = &base.transport;
            let uinv = u.clone().try_inverse().ok_or_else(|| Error::Singular {
                what: "leaf transport".into(),
                point: x.clone(),
            })?;
            let mut dq = DMatrix::zeros(mq, m);
            let mut du: Vec<DMatrix<f64>> = Vec::with_capacity(m);
            for a in 0..m {
                let shifted = |h: f64| -> Result<Projection> {
                    let mut y = x.clone();
                    y[a] += h;
                    self.project(original, &y)
                };
                let (p2, p1, m1, m2) = (
                    shifted(2.0 * FD_STEP)?,
                    shifted(FD_STEP)?,
                    shifted(-FD_STEP)?,
                    shifted(-2.0 * FD_STEP)?,
                );
                let stencil = |f: &dyn Fn(&Projection) -> f64| {
                    (-f(&p2) + 8.0 * f(&p1) - 8.0 * f(&m1) + f(&m2)) / (12.0 * FD_STEP)
                };
                for r in 0..mq {
                    dq[(r, a)] = stencil(&|pr: &Projection| pr.q[r]);
                }
                du.push(DMatrix::from_fn(n, n, |i, j| {
                    stencil(&|pr: &Projection| pr.transport[(i, j)])
                }));
            }
            let qpt = &base.q;
            // φ in the parallel frame is Uφ; Q*φ̄ is φ̄(Q x) dQ.
            let phi_frame = u * original.solder().one_form_matrix(x)?;
            let phi_bar = self.puzzle.solder().one_form_matrix(qpt)? * &dq;
            out.phi = out.phi.max((phi_frame - phi_bar).amax());
            // ω in the parallel frame: U d(U⁻¹) + U ω U⁻¹ = −dU U⁻¹ + U ω U⁻¹.
            for a in 0..m {
                let mut e = DVector::zeros(m);
                e[a] = 1.0;
                let w = original.connection().eval_on(x, e.as_slice())?;
                let frame = -&du[a] * &uinv + u * w * &uinv;
                let qv = dq.column(a).into_owned();
                let bar = self.puzzle.connection().eval_on(qpt, qv.as_slice())?;
                out.omega = out.omega.max((frame - bar).amax());
            }
            if let (Some(g), Some(gbar)) = (original.metric(), self.puzzle.metric()) {
                let frame = uinv.transpose() * g.eval(x)? * &uinv;
                let d = (frame - gbar.eval(qpt)?).amax();
                out.metric = Some(out.metric.unwrap_or(0.0).max(d));
            }
        }
        Ok(out)
    }
}

/// Leaf-space quotient through the slice `{x^c = value}`.
pub fn build_quotient(
    p: &Puzzle,
    slice: &SliceSpec,
    samples: &[Vec<f64>],
) -> Result<QuotientPuzzle> {
    if p.degree() != 1 {
        return Err(Error::DegreeMismatch(
            "quotient construction needs a solder 1-form".into(),
        ));
    }
    let profile = rank_profile(p, samples)?;
    let kernel_dim = match (profile.class, profile.kernel_dim()) {
        (RankClass::Surjective, Some(k)) if k > 0 => k,
        (class, _) => {
            return Err(Error::Precondition(format!(
                "quotient needs a surjective solder form with kernel, found {class}"
            )))
        }
    };
    let chart = p.chart();
    let m = chart.dim();
    if slice.fixed.len() != kernel_dim {
        return Err(Error::Precondition(format!(
            "slice fixes {} coordinates but the kernel has dimension {kernel_dim}",
            slice.fixed.len()
        )));
    }
    let mut seen = vec![false; m];
    for &(c, v) in &slice.fixed {
        if c >= m || seen[c] {
            return Err(Error::InvalidIndex(format!("slice coordinate {c}")));
        }
        let (lo, hi) = chart.domain()[c];
        if !(lo..=hi).contains(&v) {
            return Err(Error::OutOfDomain { point: vec![v] });
        }
        seen[c] = true;
    }
    let free: Vec<usize> = (0..m).filter(|&c| !seen[c]).collect();
    let names: Vec<String> = free.iter().map(|&c| chart.names()[c].clone()).collect();
    let domain: Vec<(f64, f64)> = free.iter().map(|&c| chart.domain()[c]).collect();
    let qchart = Chart::new(names, domain)?;
    let mut comps = vec![Expr::zero(); m];
    for (k, &c) in free.iter().enumerate() {
        comps[c] = Expr::var(k);
    }
    for &(c, v) in &slice.fixed {
        comps[c] = Expr::constant(v);
    }
    let sigma = ChartMap::new(&qchart, chart, comps)?;
    for q in qchart.seeded_samples(20, 0x51) {
        let x = sigma.eval(&q)?;
        let kb = kernel_basis(p, &x, kernel_dim)?;
        let bk = DMatrix::from_fn(kernel_dim, kernel_dim, |r, c| kb[(slice.fixed[r].0, c)]);
        if numerical_rank(&bk) < kernel_dim {
            return Err(Error::Singular {
                what: "slice (not transverse to the kernel)".into(),
                point: x,
            });
        }
    }
    let omega: ConnectionForms = p.connection().pullback(&sigma)?;
    let phi: BundleValuedForm = p.solder().pullback(&sigma)?;
    let metric = match p.metric() {
        Some(g) => Some(FiberMetric::new(
            &qchart,
            g.matrix().substitute(sigma.components()),
        )?),
        None => None,
    };
    let puzzle = Puzzle::new(omega, phi, metric)?;
    Ok(QuotientPuzzle {
        puzzle,
        slice: sigma,
        spec: slice.clone(),
        free,
        kernel_dim,
    })
}

/// `d^∇φ` pulled back along the surface and evaluated on `(∂_t, ∂_s)`.
pub fn residual_on_surface(p: &Puzzle, gamma: &SurfaceFamily, ts: &[f64]) -> Result<Vec<f64>> {
    let r = crate::puzzle::integrability_residual(p)?;
    let x = gamma.map.eval(ts)?;
    let jac = gamma.map.jacobian().eval(ts)?;
    let vt: Vec<f64> = jac.column(0).iter().cloned().collect();
    let vs: Vec<f64> = jac.column(1).iter().cloned().collect();
    r.components()
        .iter()
        .map(|c: &DifferentialForm| c.evaluate(&x, &[vt.clone(), vs.clone()]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::DifferentialForm;

    fn f3() -> Puzzle {
        let c = Chart::new(vec!["x", "y", "z"], vec![(-3.0, 3.0); 3]).unwrap();
        let comps = vec![
            DifferentialForm::coordinate(&c, 0),
            DifferentialForm::coordinate(&c, 1),
        ];
        Puzzle::new(
            ConnectionForms::zero(&c, 2),
            BundleValuedForm::new(&c, 1, comps).unwrap(),
            Some(FiberMetric::identity(&c, 2)),
        )
        .unwrap()
    }

    fn f6(with_connection: bool) -> Puzzle {
        let c = Chart::new(vec!["x", "y"], vec![(-1.0, 1.0), (-4.0, 4.0)]).unwrap();
        let phi =
            DifferentialForm::one_form(&c, &[Expr::zero(), c.parse("exp(x)").unwrap()]).unwrap();
        let w = if with_connection {
            ConnectionForms::from_coefficients(
                &c,
                &[vec![vec![Expr::constant(-1.0), Expr::zero()]]],
            )
            .unwrap()
        } else {
            ConnectionForms::zero(&c, 1)
        };
        let g = FiberMetric::new(
            &c,
            crate::symbolic::ExprMatrix::from_rows(vec![vec![c.parse("exp(-2*x)").unwrap()]]),
        )
        .unwrap();
        Puzzle::new(w, BundleValuedForm::new(&c, 1, vec![phi]).unwrap(), Some(g)).unwrap()
    }

    fn contact() -> Puzzle {
        let c = Chart::new(vec!["x", "y", "z"], vec![(-2.0, 2.0); 3]).unwrap();
        let phi =
            DifferentialForm::one_form(&c, &[c.parse("-y").unwrap(), Expr::zero(), Expr::one()])
                .unwrap();
        Puzzle::new(
            ConnectionForms::zero(&c, 1),
            BundleValuedForm::new(&c, 1, vec![phi]).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn identity_residual_examples() {
        let p = contact();
        let g = SurfaceFamily::parse(p.chart(), &["t", "s", "0"]).unwrap();
        let grid = g.params().seeded_samples(10, 1);
        for r in identity_residual(&p, &g, &grid).unwrap() {
            assert!((r[0] - 1.0).abs() < 1e-15);
        }
        let p = f6(true);
        let g = SurfaceFamily::parse(p.chart(), &["t*s", "s^2 + t"]).unwrap();
        for r in identity_residual(&p, &g, &grid).unwrap() {
            assert!(r[0].abs() < 1e-14);
        }
        let flat_in_t = SurfaceFamily::parse(contact().chart(), &["s", "s^2", "0"]).unwrap();
        for r in identity_residual(&contact(), &flat_in_t, &grid).unwrap() {
            assert_eq!(r[0], 0.0);
        }
    }

    #[test]
    fn surface_must_stay_in_chart() {
        let p = f6(true);
        assert!(matches!(
            SurfaceFamily::parse(p.chart(), &["3*t", "s"]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn transport_tables() {
        let p = f3();
        let g = SurfaceFamily::parse(p.chart(), &["s", "0", "t"]).unwrap();
        assert_eq!(
            integrate_transport_system(&p, &g, 9, 20).unwrap().max_abs(),
            0.0
        );

        let p = f6(true);
        let g = SurfaceFamily::parse(p.chart(), &["t", "s"]).unwrap();
        assert_eq!(
            integrate_transport_system(&p, &g, 9, 20).unwrap().max_abs(),
            0.0
        );

        let g = SurfaceFamily::parse(p.chart(), &["s", "t"]).unwrap();
        let table = integrate_transport_system(&p, &g, 5, 40).unwrap();
        for (a, row) in table.values.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let _ = a;
                assert!((v[0] - table.s[b].exp()).abs() < 10.0 * table.step.powi(4));
            }
        }
    }

    #[test]
    fn leaf_flows() {
        let p = f3();
        let tr = leaf_flow(
            &p,
            &[1.0, 2.0, 0.0],
            &DirectionSelector::Toward(vec![0.0, 0.0, 1.0]),
            20,
            0.1,
        )
        .unwrap();
        assert_eq!(tr.points.len(), 21);
        for (k, x) in tr.points.iter().enumerate() {
            assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
            assert!((x[2] - 0.1 * k as f64).abs() < 1e-12);
        }
        let p = f6(true);
        let tr = leaf_flow(&p, &[0.0, 3.0], &DirectionSelector::Basis(0), 30, 0.05).unwrap();
        assert!(tr.truncated || tr.points.len() == 31);
        assert!(tr.points.iter().all(|x| (x[1] - 3.0).abs() < 1e-14));
        assert!(tr.solder_defect(&p).unwrap() < 1e-12);

        let c = Chart::new(vec!["x", "y"], vec![(-1.0, 1.0); 2]).unwrap();
        let iso = Puzzle::new(
            ConnectionForms::zero(&c, 2),
            BundleValuedForm::new(
                &c,
                1,
                (0..2)
                    .map(|i| DifferentialForm::coordinate(&c, i))
                    .collect(),
            )
            .unwrap(),
            None,
        )
        .unwrap();
        assert!(leaf_flow(&iso, &[0.0, 0.0], &DirectionSelector::Basis(0), 5, 0.1).is_err());
    }

    #[test]
    fn parallel_frames_along_leaves() {
        let p = f6(true);
        let tr = leaf_flow(
            &p,
            &[-0.9, 3.0],
            &DirectionSelector::Toward(vec![1.0, 0.0]),
            30,
            0.05,
        )
        .unwrap();
        let dy = [VectorField::coordinate(p.chart(), 1)];
        assert!(parallel_frame_residual(&p, &tr, &dy).unwrap() < 1e-14);
        let bad = f6(false);
        assert!(parallel_frame_residual(&bad, &tr, &dy).unwrap() > 0.1);
    }

    #[test]
    fn quotient_of_f6() {
        let p = f6(true);
        let pts = p.chart().seeded_samples(20, 2);
        let q = build_quotient(
            &p,
            &SliceSpec {
                fixed: vec![(0, 0.0)],
            },
            &pts,
        )
        .unwrap();
        assert_eq!(q.puzzle().chart().names(), &["y".to_string()]);
        assert_eq!(
            q.puzzle()
                .solder()
                .component(0)
                .coefficient(&[0])
                .as_const(),
            Some(1.0)
        );
        let proj = q.project(&p, &[0.7, 1.5]).unwrap();
        assert!((proj.q[0] - 1.5).abs() < 1e-14);
        assert!((proj.transport[(0, 0)] - (-0.7f64).exp()).abs() < 1e-10);
        let d = q
            .pullback_defect(&p, &p.chart().seeded_samples(5, 3))
            .unwrap();
        assert!(d.max() < 1e-7, "{d:?}");
    }

    #[test]
    fn quotient_requires_kernel() {
        let c = Chart::new(vec!["x", "y"], vec![(-1.0, 1.0); 2]).unwrap();
        let iso = Puzzle::new(
            ConnectionForms::zero(&c, 2),
            BundleValuedForm::new(
                &c,
                1,
                (0..2)
                    .map(|i| DifferentialForm::coordinate(&c, i))
                    .collect(),
            )
            .unwrap(),
            None,
        )
        .unwrap();
        assert!(build_quotient(
            &iso,
            &SliceSpec {
                fixed: vec![(0, 0.0)]
            },
            &c.seeded_samples(5, 1)
        )
        .is_err());
    }
}

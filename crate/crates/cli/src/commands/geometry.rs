use solderlab_core::embed::{
    adapted_frame, build_ambient_metric, extract_a, extract_h, levi_civita_forms, split_residual,
    verify_embedding,
};
use solderlab_core::forms::Chart;
use solderlab_core::observables::{classify_solvability, observable_residual, Solvability};
use solderlab_core::puzzle::{rank_profile, RankClass};
use solderlab_core::specfile::PuzzleSpec;

use crate::command::{not_applicable, Command, CommandResult, Context};
use crate::report::CheckRecord;

/// First-order expansion coefficients go through two symbolic inversions.
const FIRST_ORDER_FLOOR: f64 = 1e-6;
const EMBED_SAMPLES: usize = 20;

pub struct Embed;

impl Command for Embed {
    fn name(&self) -> &'static str {
        "embed"
    }

    fn summary(&self) -> &'static str {
        "adapted frame, second fundamental form and the local isometric embedding"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        spec.embed.is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let p = &ctx.spec.puzzle;
        if p.degree() != 1 || p.metric().is_none() {
            return Err(not_applicable(
                self.name(),
                "needs a solder 1-form and a fiber metric",
            ));
        }
        let class = rank_profile(p, &ctx.points)?.class;
        if class != RankClass::Injective {
            return Err(not_applicable(
                self.name(),
                format!("needs an injective solder form, found {class}"),
            ));
        }
        let (completion, domain) = match &ctx.spec.embed {
            Some(e) => (e.completion.as_deref(), e.domain.clone()),
            None => (None, p.chart().domain().to_vec()),
        };
        let pts = Chart::new(p.chart().names().to_vec(), domain)?
            .seeded_samples(ctx.options.samples.min(EMBED_SAMPLES), ctx.options.seed);
        let n = pts.len();
        let tol = ctx.options.tol;
        let frame = adapted_frame(p, completion)?;
        let (tan, nor) = split_residual(&frame, p, &pts)?;
        let (mut h_asym, mut a_sym): (f64, f64) = (0.0, 0.0);
        for x in &pts {
            h_asym = h_asym.max(extract_h(&frame, p, x)?.asymmetry);
            a_sym = a_sym.max(extract_a(&frame, p, x)?.symmetric_part);
        }
        let ambient = build_ambient_metric(&frame, None)?;
        let varpi = levi_civita_forms(&ambient)?;
        let r = verify_embedding(p, &frame, &ambient, &varpi, None, &pts)?;
        Ok(vec![
            CheckRecord::residual(self.name(), "adapted-integrability", tan.max(nor), tol, n),
            CheckRecord::residual(self.name(), "h-symmetry", h_asym, tol, n),
            CheckRecord::residual(self.name(), "normal-antisymmetry", a_sym, tol, n),
            CheckRecord::residual(self.name(), "embedding-tangential", r.tangential, tol, n)
                .with_detail(format!("positivity radius {:.3e}", ambient.radius)),
            CheckRecord::residual(
                self.name(),
                "embedding-first-order",
                r.first_order,
                tol.max(FIRST_ORDER_FLOOR),
                n,
            ),
        ])
    }
}

pub struct Observable;

impl Command for Observable {
    fn name(&self) -> &'static str {
        "observable"
    }

    fn summary(&self) -> &'static str {
        "solvability of dα = (f, φ) for the listed functions α"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        !spec.observables.is_empty()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        if ctx.spec.observables.is_empty() {
            return Err(not_applicable(self.name(), "needs [[observable]] entries"));
        }
        let p = &ctx.spec.puzzle;
        let n = ctx.points.len();
        let tol = ctx.options.tol;
        let mut out = Vec::new();
        for obs in &ctx.spec.observables {
            let label = format!("alpha = {}", obs.text);
            let s = classify_solvability(p, &obs.alpha, &ctx.points, tol, ctx.spec.slice.as_ref())?;
            let detail = match &s {
                Solvability::Unique(_) => "unique solution".to_string(),
                Solvability::Affine {
                    annihilator_dim, ..
                } => {
                    format!("affine family, annihilator dimension {annihilator_dim}")
                }
                Solvability::LeafConstant { quotient, .. } => {
                    format!(
                        "constant on leaves{}",
                        if quotient.is_some() {
                            ", quotient observable built"
                        } else {
                            ""
                        }
                    )
                }
                Solvability::Unsolvable {
                    point,
                    direction,
                    derivative,
                } => {
                    format!(
                        "unsolvable: dα(ξ) = {derivative:.6e} at {point:?} for ξ = {direction:?}"
                    )
                }
            };
            let ok = obs.solvable.is_none_or(|want| want == s.is_solvable());
            out.push(CheckRecord::condition(
                self.name(),
                &format!("{label}: solvability"),
                ok,
                n,
                detail,
            ));
            let residual = match &s {
                Solvability::Unique(f) => {
                    let r = observable_residual(p, f)?;
                    let mut w: f64 = 0.0;
                    for x in &ctx.points {
                        w = w.max(r.max_abs_coefficient(x)?);
                    }
                    Some(w)
                }
                Solvability::Affine { residual, .. } => Some(*residual),
                Solvability::LeafConstant { max_derivative, .. } => Some(*max_derivative),
                Solvability::Unsolvable { .. } => None,
            };
            if let Some(w) = residual {
                out.push(CheckRecord::residual(
                    self.name(),
                    &format!("{label}: residual"),
                    w,
                    tol,
                    n,
                ));
            }
        }
        Ok(out)
    }
}

use solderlab_core::palatini::{
    einstein_defect, palatini_action, palatini_residual, yang_mills_residual, Quadrature,
};
use solderlab_core::specfile::PuzzleSpec;

use crate::command::{not_applicable, Command, CommandResult, Context};
use crate::report::CheckRecord;

/// The Einstein side of the equivalence is compared at a looser tolerance.
const EINSTEIN_FACTOR: f64 = 100.0;

pub struct Palatini;

impl Command for Palatini {
    fn name(&self) -> &'static str {
        "palatini"
    }

    fn summary(&self) -> &'static str {
        "Palatini residual, Einstein tensor, their equivalence and the action"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        let p = &spec.puzzle;
        p.chart().dim() == 4 && p.rank() == 4 && p.degree() == 1 && p.metric().is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        if !self.applies(ctx.spec) {
            return Err(not_applicable(
                self.name(),
                "needs m = n = 4, a solder 1-form and a fiber metric",
            ));
        }
        let p = &ctx.spec.puzzle;
        let n = ctx.points.len();
        let tol = ctx.options.tol;
        let vacuum = ctx.spec.expect.vacuum.unwrap_or(true);
        let lambda = palatini_residual(p)?.max_abs(&ctx.points)?;
        let einstein = einstein_defect(p, &ctx.points)?;
        let lam_zero = lambda <= tol;
        let ein_zero = einstein <= EINSTEIN_FACTOR * tol;
        let expectation = if vacuum {
            "expected to vanish"
        } else {
            "expected nonzero"
        };
        let mut out = vec![
            CheckRecord::residual(self.name(), "lambda", lambda, tol, n)
                .expecting(lam_zero == vacuum)
                .with_detail(expectation),
            CheckRecord::residual(self.name(), "einstein", einstein, EINSTEIN_FACTOR * tol, n)
                .expecting(ein_zero == vacuum)
                .with_detail(expectation),
            CheckRecord::condition(
                self.name(),
                "equivalence",
                lam_zero == ein_zero,
                n,
                format!("lambda vanishes: {lam_zero}, einstein vanishes: {ein_zero}"),
            ),
        ];
        if let Some(quad) = &ctx.spec.palatini {
            let a = palatini_action(p, quad)?;
            let b = palatini_action(
                p,
                &Quadrature {
                    nodes: 2 * quad.nodes,
                    ..quad.clone()
                },
            )?;
            out.push(
                CheckRecord::residual(
                    self.name(),
                    "action-convergence",
                    (a - b).abs(),
                    tol,
                    quad.nodes.pow(4),
                )
                .with_detail(format!("action = {b:.12e}")),
            );
        }
        Ok(out)
    }
}

pub struct YangMills;

impl Command for YangMills {
    fn name(&self) -> &'static str {
        "yangmills"
    }

    fn summary(&self) -> &'static str {
        "Yang–Mills residual d^∇(*Ω) for a given chart metric"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        spec.yang_mills.is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let g = ctx
            .spec
            .yang_mills
            .as_ref()
            .ok_or_else(|| not_applicable(self.name(), "needs a [yangmills] metric"))?;
        let r = yang_mills_residual(ctx.spec.puzzle.connection(), g)?;
        let mut worst: f64 = 0.0;
        for x in &ctx.points {
            worst = worst.max(r.max_abs_coefficient(x)?);
        }
        Ok(vec![CheckRecord::residual(
            self.name(),
            "yang-mills",
            worst,
            ctx.options.tol,
            ctx.points.len(),
        )])
    }
}

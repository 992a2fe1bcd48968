use solderlab_core::puzzle::{
    frobenius_residual, induced_metric, integrability_defect, numerical_rank, rank_profile,
};
use solderlab_core::specfile::PuzzleSpec;

use crate::command::{not_applicable, Command, CommandResult, Context};
use crate::report::CheckRecord;

pub struct Check;

impl Command for Check {
    fn name(&self) -> &'static str {
        "check"
    }

    fn summary(&self) -> &'static str {
        "integrability d^∇φ = 0 and metric compatibility"
    }

    fn applies(&self, _spec: &PuzzleSpec) -> bool {
        true
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let p = &ctx.spec.puzzle;
        let n = ctx.points.len();
        let tol = ctx.options.tol;
        let mut out = vec![CheckRecord::residual(
            self.name(),
            "integrability",
            integrability_defect(p, &ctx.points)?,
            tol,
            n,
        )];
        if let Some(d) = p.metric_defect(&ctx.points)? {
            out.push(CheckRecord::residual(
                self.name(),
                "metric-compatibility",
                d,
                tol,
                n,
            ));
        }
        Ok(out)
    }
}

pub struct Classify;

impl Command for Classify {
    fn name(&self) -> &'static str {
        "classify"
    }

    fn summary(&self) -> &'static str {
        "rank case of the solder form, kernel dimension and Frobenius brackets"
    }

    fn applies(&self, _spec: &PuzzleSpec) -> bool {
        true
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let spec = ctx.spec;
        let n = ctx.points.len();
        let profile = rank_profile(&spec.puzzle, &ctx.points)?;
        let kernel = profile.kernel_dim();
        let detail = match kernel {
            Some(k) => format!("{}, kernel dim {k}", profile.class),
            None => format!("{}", profile.class),
        };
        let ok = kernel.is_some() && spec.expect.rank_matches(&profile.class);
        let mut out = vec![CheckRecord::condition(
            self.name(),
            "rank-class",
            ok,
            n,
            detail,
        )];
        if let Some(k) = spec.expect.kernel_dim {
            out.push(CheckRecord::condition(
                self.name(),
                "kernel-dimension",
                kernel == Some(k),
                n,
                match kernel {
                    Some(found) => format!("expected {k}, found {found}"),
                    None => format!("expected {k}, rank varies"),
                },
            ));
        }
        for (x, y) in &spec.frobenius {
            let r = frobenius_residual(&spec.puzzle, x, y, &ctx.points)?;
            out.push(CheckRecord::residual(
                self.name(),
                "frobenius-kernel-fields",
                r.kernel_violation,
                ctx.options.tol,
                n,
            ));
            out.push(CheckRecord::residual(
                self.name(),
                "frobenius-bracket",
                r.bracket,
                ctx.options.tol,
                n,
            ));
        }
        Ok(out)
    }
}

pub struct Metric;

impl Command for Metric {
    fn name(&self) -> &'static str {
        "metric"
    }

    fn summary(&self) -> &'static str {
        "fiber metric positivity, compatibility and the induced chart metric"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        spec.puzzle.degree() == 1 && spec.puzzle.metric().is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let p = &ctx.spec.puzzle;
        if !self.applies(ctx.spec) {
            return Err(not_applicable(
                self.name(),
                "needs a fiber metric and a solder 1-form",
            ));
        }
        let n = ctx.points.len();
        let g = p.metric().expect("checked above");
        let positive = g.check_positive_definite(&ctx.points);
        let mut out = vec![CheckRecord::condition(
            self.name(),
            "fiber-positive-definite",
            positive.is_ok(),
            n,
            positive
                .err()
                .map(|e| e.to_string())
                .unwrap_or_else(|| "ok".into()),
        )];
        let defect = p.metric_defect(&ctx.points)?.unwrap_or(0.0);
        out.push(CheckRecord::residual(
            self.name(),
            "compatibility",
            defect,
            ctx.options.tol,
            n,
        ));
        // The induced metric should have the rank of the solder map.
        let h = induced_metric(p)?;
        let mut mismatch = 0usize;
        let mut asym: f64 = 0.0;
        for x in &ctx.points {
            let hx = h.eval(x)?;
            asym = asym.max((&hx - hx.transpose()).amax());
            if numerical_rank(&hx) != numerical_rank(&p.solder_map(x)?) {
                mismatch += 1;
            }
        }
        out.push(CheckRecord::residual(
            self.name(),
            "induced-symmetry",
            asym,
            ctx.options.tol,
            n,
        ));
        out.push(CheckRecord::condition(
            self.name(),
            "induced-rank",
            mismatch == 0,
            n,
            format!("{mismatch} samples where rank(φ*g) differs from rank(φ)"),
        ));
        Ok(out)
    }
}

use solderlab_core::puzzle::integrability_defect;
use solderlab_core::solderint::{
    build_quotient, direct_table, identity_residual, integrate_transport_system, leaf_flow,
    parallel_frame_residual,
};
use solderlab_core::specfile::PuzzleSpec;

use crate::command::{not_applicable, Command, CommandResult, Context};
use crate::report::CheckRecord;

/// Pull-back checks differentiate `Q` by finite differences.
const QUOTIENT_FLOOR: f64 = 1e-7;
const TABLE_NODES: usize = 9;

pub struct Transport;

impl Command for Transport {
    fn name(&self) -> &'static str {
        "transport"
    }

    fn summary(&self) -> &'static str {
        "transport identity on surfaces, RK4 transport tables and leaf parallel frames"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        !spec.transport.is_empty() || spec.leaf.is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        if !self.applies(ctx.spec) {
            return Err(not_applicable(
                self.name(),
                "needs [[transport]] or [leaf] sections",
            ));
        }
        let p = &ctx.spec.puzzle;
        let tol = ctx.options.tol;
        let steps = ctx.options.steps;
        let mut out = Vec::new();
        for (k, t) in ctx.spec.transport.iter().enumerate() {
            let grid = t
                .gamma
                .params()
                .seeded_samples(ctx.options.samples, ctx.options.seed ^ k as u64);
            let id = identity_residual(p, &t.gamma, &grid)?;
            let worst = id.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            out.push(CheckRecord::residual(
                self.name(),
                &format!("identity[{k}]"),
                worst,
                tol,
                grid.len(),
            ));

            let table = integrate_transport_system(p, &t.gamma, TABLE_NODES, steps)?;
            let bound = 10.0 * table.step.powi(4);
            let cells = table.t.len() * table.s.len();
            let rec = if t.in_leaf {
                CheckRecord::residual(
                    self.name(),
                    &format!("leaf-table[{k}]"),
                    table.max_abs(),
                    bound,
                    cells,
                )
            } else {
                let direct = direct_table(p, &t.gamma, TABLE_NODES, steps)?;
                CheckRecord::residual(
                    self.name(),
                    &format!("direct-table[{k}]"),
                    table.max_diff(&direct),
                    bound,
                    cells,
                )
            };
            out.push(rec.with_detail(format!("{steps} steps of {:.3e}", table.step)));
        }
        if let Some(leaf) = &ctx.spec.leaf {
            let (mut tangency, mut frame): (f64, f64) = (0.0, 0.0);
            for seed in &leaf.seeds {
                let trace = leaf_flow(p, seed, &leaf.direction, leaf.steps, leaf.step)?;
                tangency = tangency.max(trace.solder_defect(p)?);
                if !leaf.transversal.is_empty() {
                    frame = frame.max(parallel_frame_residual(p, &trace, &leaf.transversal)?);
                }
            }
            let n = leaf.seeds.len();
            out.push(CheckRecord::residual(
                self.name(),
                "leaf-tangency",
                tangency,
                tol,
                n,
            ));
            if !leaf.transversal.is_empty() {
                out.push(CheckRecord::residual(
                    self.name(),
                    "parallel-frame",
                    frame,
                    tol,
                    n,
                ));
            }
        }
        Ok(out)
    }
}

pub struct Quotient;

impl Command for Quotient {
    fn name(&self) -> &'static str {
        "quotient"
    }

    fn summary(&self) -> &'static str {
        "leaf-space quotient puzzle and the pull-back by Q"
    }

    fn applies(&self, spec: &PuzzleSpec) -> bool {
        spec.slice.is_some()
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let slice = ctx
            .spec
            .slice
            .as_ref()
            .ok_or_else(|| not_applicable(self.name(), "needs a [slice] section"))?;
        let p = &ctx.spec.puzzle;
        let q = build_quotient(p, slice, &ctx.points)?;
        let n = ctx.points.len();
        let tol = ctx.options.tol;
        let d = q.pullback_defect(p, &ctx.points)?;
        let floor = tol.max(QUOTIENT_FLOOR);
        let mut out = vec![
            CheckRecord::residual(self.name(), "pullback-connection", d.omega, floor, n),
            CheckRecord::residual(self.name(), "pullback-solder", d.phi, floor, n),
        ];
        if let Some(g) = d.metric {
            out.push(CheckRecord::residual(
                self.name(),
                "pullback-metric",
                g,
                floor,
                n,
            ));
        }
        let qpts = q
            .puzzle()
            .chart()
            .seeded_samples(ctx.options.samples, ctx.options.seed);
        out.push(CheckRecord::residual(
            self.name(),
            "quotient-integrability",
            integrability_defect(q.puzzle(), &qpts)?,
            tol,
            qpts.len(),
        ));
        Ok(out)
    }
}

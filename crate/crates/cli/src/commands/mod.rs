//! The built-in commands.

mod fields;
mod geometry;
mod leaves;
mod structure;

use crate::command::{Command, CommandError, CommandResult, Context, Registry};
use crate::report::CheckRecord;
use solderlab_core::specfile::PuzzleSpec;

pub use fields::{Palatini, YangMills};
pub use geometry::{Embed, Observable};
pub use leaves::{Quotient, Transport};
pub use structure::{Check, Classify, Metric};

pub fn default_registry() -> Registry {
    let mut r = Registry::new();
    r.register(Box::new(Check));
    r.register(Box::new(Classify));
    r.register(Box::new(Metric));
    r.register(Box::new(Embed));
    r.register(Box::new(Quotient));
    r.register(Box::new(Transport));
    r.register(Box::new(Palatini));
    r.register(Box::new(YangMills));
    r.register(Box::new(Observable));
    r.register(Box::new(ReportAll));
    r
}

/// Runs a command, turning numerical failures into a failed record.
pub fn run_guarded(command: &dyn Command, ctx: &Context) -> CommandResult {
    let timer = crate::report::Timer::start(ctx.options.timing);
    let mut records = match command.run(ctx) {
        Ok(r) => r,
        Err(CommandError::Core(e)) => vec![CheckRecord::condition(
            command.name(),
            "error",
            false,
            0,
            e.to_string(),
        )],
        Err(e) => return Err(e),
    };
    if command.name() != "report-all" {
        timer.stamp(&mut records);
    }
    Ok(records)
}

/// Every applicable command in name order.
pub struct ReportAll;

impl Command for ReportAll {
    fn name(&self) -> &'static str {
        "report-all"
    }

    fn summary(&self) -> &'static str {
        "run every command that applies to the puzzle"
    }

    fn applies(&self, _spec: &PuzzleSpec) -> bool {
        false
    }

    fn run(&self, ctx: &Context) -> CommandResult {
        let mut out = Vec::new();
        for c in ctx.registry.iter() {
            if c.name() != self.name() && c.applies(ctx.spec) {
                out.extend(run_guarded(c, ctx)?);
            }
        }
        Ok(out)
    }
}

use std::collections::BTreeMap;

use solderlab_core::specfile::PuzzleSpec;
use thiserror::Error;

use crate::report::CheckRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    pub tol: f64,
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub timing: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: 1e-8,
            samples: 50,
            steps: 40,
            seed: 0x5eed,
            timing: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    /// The puzzle lacks the data this command needs.
    #[error("{command}: {reason}")]
    NotApplicable { command: String, reason: String },
    #[error(transparent)]
    Core(#[from] solderlab_core::Error),
}

pub type CommandResult = Result<Vec<CheckRecord>, CommandError>;

pub struct Context<'a> {
    pub spec: &'a PuzzleSpec,
    pub options: &'a Options,
    /// Seeded sample points in the chart.
    pub points: Vec<Vec<f64>>,
    pub registry: &'a Registry,
}

pub trait Command: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Whether `report-all` runs this command on the puzzle.
    fn applies(&self, spec: &PuzzleSpec) -> bool;
    fn run(&self, ctx: &Context) -> CommandResult;
}

pub(crate) fn not_applicable(command: &str, reason: impl Into<String>) -> CommandError {
    CommandError::NotApplicable {
        command: command.into(),
        reason: reason.into(),
    }
}

/// Commands by name, iterated in name order.
#[derive(Default)]
pub struct Registry {
    commands: BTreeMap<&'static str, Box<dyn Command>>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn register(&mut self, command: Box<dyn Command>) {
        self.commands.insert(command.name(), command);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Command> {
        self.commands.get(name).map(|c| c.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.commands.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Command> {
        self.commands.values().map(|c| c.as_ref())
    }
}

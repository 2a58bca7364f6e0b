use std::sync::Arc;

use crate::data::{GriddedField, PointSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Train,
    Val,
    Test,
}

/// One interpolation problem: condition on `context` (and gridded `aux`
/// inputs), predict at `targets`.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub time_id: u32,
    pub kind: TaskKind,
    pub context: PointSet,
    pub targets: PointSet,
    pub aux: Arc<[GriddedField]>,
    /// Station indices behind `context` / `targets`; empty for GP tasks.
    pub context_stations: Vec<usize>,
    pub target_stations: Vec<usize>,
    /// Stations requested but absent at this time.
    pub missing_stations: Vec<usize>,
}

impl Task {
    pub fn new(time_id: u32, kind: TaskKind, context: PointSet, targets: PointSet) -> Self {
        Task {
            time_id,
            kind,
            context,
            targets,
            aux: Arc::from(Vec::new()),
            context_stations: Vec::new(),
            target_stations: Vec::new(),
            missing_stations: Vec::new(),
        }
    }

    pub fn with_aux(mut self, aux: Arc<[GriddedField]>) -> Self {
        self.aux = aux;
        self
    }

    pub fn dim(&self) -> usize {
        self.context.dim
    }
}

//! Sources of training tasks. Finite sources visit every item once per pass
//! in a freshly shuffled order.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::sample::{context_size, make_train_task, sample_gp_points, split_gp_points};
use super::task::{Task, TaskKind};
use crate::data::{GriddedField, PointSet};
use crate::error::{Error, Result};
use crate::field_models::{SeKernelParams, StationData};
use crate::rng::Rng;

pub trait TaskStream: Send {
    fn next_task(&mut self) -> Result<Task>;

    fn next_batch(&mut self, size: usize) -> Result<Vec<Task>> {
        (0..size).map(|_| self.next_task()).collect()
    }
}

/// Without-replacement visiting order over `0..n`, reshuffled every pass.
#[derive(Clone, Debug)]
struct PassOrder {
    order: Vec<usize>,
    pos: usize,
}

impl PassOrder {
    fn new(n: usize) -> Self {
        PassOrder {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self, rng: &mut Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Fresh GP draws forever (the infinite-data regime).
pub struct GpTaskStream {
    params: SeKernelParams,
    rng: Rng,
}

impl GpTaskStream {
    pub fn new(params: SeKernelParams, rng: Rng) -> Self {
        GpTaskStream { params, rng }
    }
}

impl TaskStream for GpTaskStream {
    fn next_task(&mut self) -> Result<Task> {
        let points = sample_gp_points(&self.params, &mut self.rng)?;
        Ok(split_gp_points(&points, TaskKind::Train, &mut self.rng))
    }
}

/// A fixed set of GP draws; each visit re-splits context and targets.
pub struct GpDatasetStream {
    draws: Vec<PointSet>,
    order: PassOrder,
    rng: Rng,
}

impl GpDatasetStream {
    pub fn new(draws: Vec<PointSet>, rng: Rng) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::config("GP dataset is empty"));
        }
        let order = PassOrder::new(draws.len());
        Ok(GpDatasetStream { draws, order, rng })
    }
}

impl TaskStream for GpDatasetStream {
    fn next_task(&mut self) -> Result<Task> {
        let i = self.order.next(&mut self.rng);
        Ok(split_gp_points(&self.draws[i], TaskKind::Train, &mut self.rng))
    }
}

/// Station training tasks over a fixed set of times.
pub struct StationTaskStream {
    data: Arc<StationData>,
    times: Vec<u32>,
    stations: Vec<usize>,
    aux: Arc<[GriddedField]>,
    order: PassOrder,
    rng: Rng,
}

impl StationTaskStream {
    pub fn new(
        data: Arc<StationData>,
        times: Vec<u32>,
        stations: Vec<usize>,
        aux: Arc<[GriddedField]>,
        rng: Rng,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::config("station task stream has no times"));
        }
        let order = PassOrder::new(times.len());
        Ok(StationTaskStream {
            data,
            times,
            stations,
            aux,
            order,
            rng,
        })
    }
}

impl TaskStream for StationTaskStream {
    fn next_task(&mut self) -> Result<Task> {
        // a full pass of skipped times means no usable time exists
        for _ in 0..self.times.len() {
            let t = self.times[self.order.next(&mut self.rng)];
            if let Some(task) = make_train_task(&self.data, t, &self.stations, &self.aux, &mut self.rng) {
                return Ok(task);
            }
        }
        Err(Error::config("no training time has two or more reporting stations"))
    }
}

/// Simulator snapshots with grid nodes playing the role of stations.
pub struct GridTaskStream {
    snapshots: Arc<[GriddedField]>,
    times: Vec<u32>,
    aux: Arc<[GriddedField]>,
    order: PassOrder,
    rng: Rng,
}

impl GridTaskStream {
    pub fn new(snapshots: Arc<[GriddedField]>, times: Vec<u32>, aux: Arc<[GriddedField]>, rng: Rng) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::config("grid task stream has no times"));
        }
        let order = PassOrder::new(times.len());
        Ok(GridTaskStream {
            snapshots,
            times,
            aux,
            order,
            rng,
        })
    }
}

impl TaskStream for GridTaskStream {
    fn next_task(&mut self) -> Result<Task> {
        let t = self.times[self.order.next(&mut self.rng)];
        Ok(make_grid_task(&self.snapshots[t as usize], t, TaskKind::Train, &self.aux, &mut self.rng))
    }
}

/// Random r²-law split of every node of a gridded snapshot.
pub fn make_grid_task(field: &GriddedField, time_id: u32, kind: TaskKind, aux: &Arc<[GriddedField]>, rng: &mut Rng) -> Task {
    let points = PointSet::new(field.dim(), field.node_coords(), field.values.clone());
    let n = points.len();
    let n_context = context_size(rng.random(), n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (ctx, tgt) = idx.split_at(n_context);
    let mut ctx = ctx.to_vec();
    let mut tgt = tgt.to_vec();
    ctx.sort_unstable();
    tgt.sort_unstable();
    Task::new(time_id, kind, points.select(&ctx), points.select(&tgt)).with_aux(aux.clone())
}

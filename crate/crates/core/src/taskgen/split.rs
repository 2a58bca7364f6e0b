//! Station and time splits with nesting and leakage guarantees.

use rand::seq::SliceRandom;

use crate::data::sq_dist;
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::{derived, label_key};

/// Train share of an 80/20 split, rounding half up.
pub fn train_share(n: usize) -> usize {
    (8 * n + 5) / 10
}

fn master_shuffle<T: Clone>(items: &[T], seed: u64, label: &str) -> Vec<T> {
    let mut out = items.to_vec();
    out.shuffle(&mut derived(seed, &[label_key(label)]));
    out
}

/// First `n_stations` of a fixed shuffle of `pool`, split 80/20 into
/// (train, val). Smaller selections are prefixes of larger ones.
pub fn split_stations(pool: &[usize], n_stations: usize, master_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_stations > pool.len() {
        return Err(Error::config(format!(
            "N_stations = {n_stations} exceeds the {} stations available",
            pool.len()
        )));
    }
    let mut order = master_shuffle(pool, master_seed, "stations");
    order.truncate(n_stations);
    let val = order.split_off(train_share(n_stations));
    Ok((order, val))
}

/// Slot layout of one split cycle: 19 train days, 2 discarded, 2 val,
/// 2 discarded, 2.5 test, 2 discarded. Half days round up to whole slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CycleLayout {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub gap: usize,
}

impl CycleLayout {
    pub fn new(slots_per_day: usize) -> Self {
        CycleLayout {
            train: 19 * slots_per_day,
            val: 2 * slots_per_day,
            test: (5 * slots_per_day).div_ceil(2),
            gap: 2 * slots_per_day,
        }
    }

    pub fn len(&self) -> usize {
        self.train + self.val + self.test + 3 * self.gap
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Calendar partition into train / val / test times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeSplit {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

/// Splits an ordered calendar of time ids by repeating [`CycleLayout`];
/// a trailing partial cycle is dropped.
pub fn split_times(calendar: &[u32], slots_per_day: usize) -> Result<TimeSplit> {
    if slots_per_day == 0 {
        return Err(Error::config("slots_per_day must be positive"));
    }
    let layout = CycleLayout::new(slots_per_day);
    let cycle = layout.len();
    if calendar.len() < cycle {
        return Err(Error::config(format!(
            "calendar of {} slots is shorter than one {cycle}-slot split cycle",
            calendar.len()
        )));
    }
    let mut split = TimeSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let val_start = layout.train + layout.gap;
    let test_start = val_start + layout.val + layout.gap;
    for chunk in calendar.chunks_exact(cycle) {
        split.train.extend_from_slice(&chunk[..layout.train]);
        split.val.extend_from_slice(&chunk[val_start..val_start + layout.val]);
        split.test.extend_from_slice(&chunk[test_start..test_start + layout.test]);
    }
    Ok(split)
}

/// Fixed random subset of `pool`; smaller subsets are prefixes of larger ones.
pub fn subsample_times(pool: &[u32], n_times: usize, seed: u64) -> Result<Vec<u32>> {
    if n_times > pool.len() {
        return Err(Error::config(format!(
            "N_times = {n_times} exceeds the {} available times",
            pool.len()
        )));
    }
    let mut order = master_shuffle(pool, seed, "times");
    order.truncate(n_times);
    Ok(order)
}

/// Greedy farthest-point selection of `k` stations, starting from the
/// station nearest the centroid. Ties go to the lower index.
pub fn farthest_point_stations(coords: &[f64], dim: usize, k: usize) -> Vec<usize> {
    let n = coords.len() / dim;
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let point = |i: usize| &coords[i * dim..(i + 1) * dim];
    let centroid: Vec<f64> = (0..dim)
        .map(|d| (0..n).map(|i| coords[i * dim + d]).sum::<f64>() / n as f64)
        .collect();
    let first = (0..n)
        .min_by(|&a, &b| sq_dist(point(a), &centroid).total_cmp(&sq_dist(point(b), &centroid)))
        .expect("non-empty pool");
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    while chosen.len() < k {
        let mut best = 0;
        for i in 1..n {
            if dist[i] > dist[best] {
                best = i;
            }
        }
        chosen.push(best);
        for i in 0..n {
            dist[i] = dist[i].min(sq_dist(point(i), point(best)));
        }
    }
    chosen
}

/// Everything needed to replay which stations and times a run may touch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_stations: Vec<usize>,
    pub val_stations: Vec<usize>,
    pub test_stations: Vec<usize>,
    pub train_times: Vec<u32>,
    pub val_times: Vec<u32>,
    pub test_times: Vec<u32>,
    pub n_stations: usize,
    pub n_times: usize,
    pub slots_per_day: usize,
    pub master_seed: u64,
}

/// Inputs for [`SplitPlan::build`].
#[derive(Clone, Debug)]
pub struct PlanRequest<'a> {
    pub station_coords: &'a [f64],
    pub dim: usize,
    pub calendar: &'a [u32],
    pub slots_per_day: usize,
    pub n_stations: usize,
    pub n_times: usize,
    pub master_seed: u64,
    /// Seed of the train/val time subsets (replicates may vary it).
    pub time_seed: u64,
}

impl SplitPlan {
    /// Test stations: farthest-point 10% of all stations. Train/val
    /// stations: nested 80/20 split of the rest. Train/val times: nested
    /// subsets of the calendar's train and val periods in 80/20 proportion.
    /// Test times: the whole calendar test period.
    pub fn build(req: &PlanRequest) -> Result<Self> {
        let n_all = req.station_coords.len() / req.dim;
        let test_stations = farthest_point_stations(req.station_coords, req.dim, (n_all + 5) / 10);
        let pool: Vec<usize> = (0..n_all).filter(|i| !test_stations.contains(i)).collect();
        let (train_stations, val_stations) = split_stations(&pool, req.n_stations, req.master_seed)?;
        let cal = split_times(req.calendar, req.slots_per_day)?;
        let n_train_times = train_share(req.n_times);
        let train_times = subsample_times(&cal.train, n_train_times, req.time_seed)?;
        let val_times = subsample_times(&cal.val, req.n_times - n_train_times, req.time_seed)?;
        let plan = SplitPlan {
            train_stations,
            val_stations,
            test_stations,
            train_times,
            val_times,
            test_times: cal.test,
            n_stations: req.n_stations,
            n_times: req.n_times,
            slots_per_day: req.slots_per_day,
            master_seed: req.master_seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Checks disjointness, the 80/20 sizes and the two-day gap between splits.
    pub fn validate(&self) -> Result<()> {
        let disjoint = |a: &[usize], b: &[usize]| a.iter().all(|x| !b.contains(x));
        if !disjoint(&self.train_stations, &self.val_stations)
            || !disjoint(&self.train_stations, &self.test_stations)
            || !disjoint(&self.val_stations, &self.test_stations)
        {
            return Err(Error::config("station splits overlap"));
        }
        if self.train_stations.len() != train_share(self.n_stations)
            || self.train_stations.len() + self.val_stations.len() != self.n_stations
        {
            return Err(Error::config("station split sizes do not match N_stations"));
        }
        if self.train_times.len() != train_share(self.n_times)
            || self.train_times.len() + self.val_times.len() != self.n_times
        {
            return Err(Error::config("time split sizes do not match N_times"));
        }
        let min_gap = 2 * self.slots_per_day as i64;
        let groups = [&self.train_times, &self.val_times, &self.test_times];
        for (a, ga) in groups.iter().enumerate() {
            for gb in groups.iter().skip(a + 1) {
                for &x in ga.iter() {
                    for &y in gb.iter() {
                        if (x as i64 - y as i64).abs() < min_gap {
                            return Err(Error::config(format!(
                                "times {x} and {y} from different splits are closer than two days"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("n_stations", self.n_stations);
        kv.set("n_times", self.n_times);
        kv.set("slots_per_day", self.slots_per_day);
        kv.set("master_seed", self.master_seed);
        kv.set_list("train_stations", &self.train_stations);
        kv.set_list("val_stations", &self.val_stations);
        kv.set_list("test_stations", &self.test_stations);
        kv.set_list("train_times", &self.train_times);
        kv.set_list("val_times", &self.val_times);
        kv.set_list("test_times", &self.test_times);
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let plan = SplitPlan {
            train_stations: kv.get_list("train_stations")?,
            val_stations: kv.get_list("val_stations")?,
            test_stations: kv.get_list("test_stations")?,
            train_times: kv.get_list("train_times")?,
            val_times: kv.get_list("val_times")?,
            test_times: kv.get_list("test_times")?,
            n_stations: kv.get("n_stations")?,
            n_times: kv.get("n_times")?,
            slots_per_day: kv.get("slots_per_day")?,
            master_seed: kv.get("master_seed")?,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eighty_twenty_rounds_half_up() {
        assert_eq!(train_share(20), 16);
        assert_eq!(train_share(5), 4);
        assert_eq!(train_share(16), 13);
        assert_eq!(train_share(3), 2);
        assert_eq!(train_share(1), 1);
    }

    #[test]
    fn station_split_sizes_and_nesting() {
        let pool: Vec<usize> = (0..540).collect();
        let (t20, v20) = split_stations(&pool, 20, 4).unwrap();
        assert_eq!((t20.len(), v20.len()), (16, 4));
        let (t100, v100) = split_stations(&pool, 100, 4).unwrap();
        let sel100: Vec<usize> = t100.iter().chain(&v100).copied().collect();
        assert!(t20.iter().chain(&v20).all(|s| sel100.contains(s)));
        assert_eq!(&sel100[..20], &[t20.clone(), v20].concat()[..]);
        let small: Vec<usize> = (0..400).collect();
        assert!(matches!(split_stations(&small, 500, 4), Err(Error::Config(_))));
    }

    #[test]
    fn cycle_at_four_slots_per_day() {
        let cal: Vec<u32> = (0..236).collect();
        let s = split_times(&cal, 4).unwrap();
        assert_eq!(CycleLayout::new(4).len(), 118);
        assert_eq!(&s.train[..76], &(0..76).collect::<Vec<u32>>()[..]);
        assert_eq!(&s.val[..8], &(84..92).collect::<Vec<u32>>()[..]);
        assert_eq!(&s.test[..10], &(100..110).collect::<Vec<u32>>()[..]);
        assert_eq!(s.train[76], 118);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (152, 16, 20));
    }

    #[test]
    fn daily_slots_round_test_period_to_three_days() {
        assert_eq!(CycleLayout::new(1).test, 3);
        assert_eq!(CycleLayout::new(1).len(), 30);
        let short: Vec<u32> = (0..29).collect();
        assert!(split_times(&short, 1).is_err());
    }

    #[test]
    fn partial_cycle_is_dropped() {
        let cal: Vec<u32> = (0..150).collect();
        let s = split_times(&cal, 4).unwrap();
        assert_eq!(s.train.len(), 76);
        assert!(s.train.iter().chain(&s.val).chain(&s.test).all(|&t| t < 118));
    }

    #[test]
    fn time_subsets_nest() {
        let pool: Vec<u32> = (0..300).collect();
        let a = subsample_times(&pool, 16, 9).unwrap();
        let b = subsample_times(&pool, 80, 9).unwrap();
        assert_eq!(&b[..16], &a[..]);
        let mut all = subsample_times(&pool, 300, 9).unwrap();
        all.sort();
        assert_eq!(all, pool);
        assert!(subsample_times(&pool, 301, 9).is_err());
    }

    #[test]
    fn farthest_points_spread_out() {
        let coords = [0.5, 0.5, 0.0, 0.0, 1.0, 1.0, 0.52, 0.5, 0.0, 1.0];
        assert_eq!(farthest_point_stations(&coords, 2, 3), vec![0, 1, 2]);
    }

    #[test]
    fn plan_round_trips_through_kv() {
        let coords: Vec<f64> = (0..200).map(|i| (i as f64 * 0.618).fract()).collect();
        let cal: Vec<u32> = (0..236).collect();
        let plan = SplitPlan::build(&PlanRequest {
            station_coords: &coords,
            dim: 2,
            calendar: &cal,
            slots_per_day: 4,
            n_stations: 20,
            n_times: 16,
            master_seed: 1,
            time_seed: 2,
        })
        .unwrap();
        assert_eq!(plan.test_stations.len(), 10);
        assert_eq!((plan.train_times.len(), plan.val_times.len()), (13, 3));
        let back = SplitPlan::from_kv(&KvFile::parse(&plan.to_kv().to_string()).unwrap()).unwrap();
        assert_eq!(back, plan);
    }
}

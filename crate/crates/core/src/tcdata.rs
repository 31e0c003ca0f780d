//! Therapeutic-community records: residents, timestamped peer events, and
//! the role-model exposure variables built from them.
//!
//! Days are integers relative to an epoch. Files may carry the epoch in a
//! leading `# epoch: ...` line, which is preserved on round trips.

use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{rng_from_seed, sub_seed};

pub const MAX_STAY_DAYS: i64 = 180;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resident {
    pub id: String,
    pub entry_day: i64,
    pub exit_day: i64,
    pub graduated: u8,
    pub age: f64,
    pub white: u8,
    pub lsi: f64,
}

impl Resident {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.exit_day <= self.entry_day {
            return Err(format!("resident {}: exit_day must be after entry_day", self.id));
        }
        if self.exit_day - self.entry_day > MAX_STAY_DAYS {
            return Err(format!("resident {}: stay exceeds {MAX_STAY_DAYS} days", self.id));
        }
        if self.graduated > 1 || self.white > 1 {
            return Err(format!("resident {}: graduated and white must be 0 or 1", self.id));
        }
        if !(self.lsi >= 0.0) || !self.age.is_finite() {
            return Err(format!("resident {}: lsi must be nonnegative and age finite", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidentTable {
    pub residents: Vec<Resident>,
    pub epoch: Option<String>,
    index: HashMap<String, usize>,
}

fn split_epoch(text: &str) -> (Option<String>, &str) {
    match text.strip_prefix('#') {
        Some(rest) => {
            let (line, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let line = line.trim();
            let epoch = line.strip_prefix("epoch").map(|e| e.trim_start_matches([':', '=', ' ']).trim().to_string());
            (epoch, body)
        }
        None => (None, text),
    }
}

impl ResidentTable {
    pub fn new(residents: Vec<Resident>, epoch: Option<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(residents.len());
        for (row, r) in residents.iter().enumerate() {
            r.validate().map_err(|message| Error::Row { row: row + 1, message })?;
            if index.insert(r.id.clone(), row).is_some() {
                return Err(Error::Row { row: row + 1, message: format!("duplicate resident id {}", r.id) });
            }
        }
        Ok(Self { residents, epoch, index })
    }

    pub fn len(&self) -> usize {
        self.residents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residents.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (epoch, body) = split_epoch(&text);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let mut residents = Vec::new();
        for (row, rec) in rdr.deserialize().enumerate() {
            let res: Resident = rec.map_err(|e| Error::Row { row: row + 1, message: e.to_string() })?;
            residents.push(res);
        }
        Self::new(residents, epoch)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if let Some(e) = &self.epoch {
            writeln!(w, "# epoch: {e}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.residents {
            wtr.serialize(r)?;
        }
        if self.residents.is_empty() {
            wtr.write_record(["id", "entry_day", "exit_day", "graduated", "age", "white", "lsi"])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn graduated(&self) -> Vec<f64> {
        self.residents.iter().map(|r| r.graduated as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub sender: String,
    pub receiver: String,
    pub day: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Affirmations,
    Corrections,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub kind: EventKind,
}

impl EventLog {
    pub fn read_csv<R: Read>(mut r: R, kind: EventKind) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (_, body) = split_epoch(&text);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let mut events = Vec::new();
        for (row, rec) in rdr.deserialize().enumerate() {
            events.push(rec.map_err(|e| Error::Row { row: row + 1, message: e.to_string() })?);
        }
        Ok(Self { events, kind })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sender", "receiver", "day"])?;
        for e in &self.events {
            wtr.write_record([e.sender.as_str(), e.receiver.as_str(), &e.day.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Resolve ids to table positions, checking that both parties were
    /// present on the event day. Row numbers in errors are 1-based data rows.
    pub fn resolve(&self, residents: &ResidentTable) -> Result<Vec<(usize, usize)>> {
        self.events
            .iter()
            .enumerate()
            .map(|(row, e)| {
                let err = |message: String| Error::Row { row: row + 1, message };
                let s = residents.position(&e.sender).ok_or_else(|| err(format!("unknown sender id {}", e.sender)))?;
                let r = residents
                    .position(&e.receiver)
                    .ok_or_else(|| err(format!("unknown receiver id {}", e.receiver)))?;
                if s == r {
                    return Err(err(format!("self-addressed event for {}", e.sender)));
                }
                for &k in &[s, r] {
                    let res = &residents.residents[k];
                    if e.day < res.entry_day || e.day >= res.exit_day {
                        return Err(err(format!("day {} outside the stay of {}", e.day, res.id)));
                    }
                }
                Ok((s, r))
            })
            .collect()
    }
}

/// How event counts become tie weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieWeights {
    /// `A_ij` counts events in both directions.
    #[default]
    Summed,
    /// Ego `i` weights peer `j` by the events `j` sent to `i` only.
    SenderOnly,
}

/// Symmetric event-count graph: `A_ij` = events between `i` and `j` in either
/// direction, or 1 for any positive count when `binarize` is set.
pub fn build_adjacency(log: &EventLog, residents: &ResidentTable, binarize: bool) -> Result<Graph> {
    let pairs = log.resolve(residents)?;
    let n = residents.len();
    let mut a = DMatrix::zeros(n, n);
    for (s, r) in pairs {
        a[(s, r)] += 1.0;
        a[(r, s)] += 1.0;
    }
    if binarize {
        a.apply(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
    }
    Ok(Graph::from_trusted(a))
}

/// Exposure weights: row `i` holds ego `i`'s weight on each peer.
pub fn exposure_weights(log: &EventLog, residents: &ResidentTable, mode: TieWeights, binarize: bool) -> Result<DMatrix<f64>> {
    match mode {
        TieWeights::Summed => Ok(build_adjacency(log, residents, binarize)?.weights().clone()),
        TieWeights::SenderOnly => {
            let pairs = log.resolve(residents)?;
            let n = residents.len();
            let mut a = DMatrix::zeros(n, n);
            for (s, r) in pairs {
                a[(r, s)] += 1.0;
            }
            if binarize {
                a.apply(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
            }
            Ok(a)
        }
    }
}

/// Outcome of `j` as seen by `i`: `S_j` if `j` left strictly before `i`.
pub fn observed_outcome(i: &Resident, j: &Resident) -> u8 {
    if j.exit_day < i.exit_day {
        j.graduated
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureVector {
    pub values: Vec<Option<f64>>,
    pub definition: String,
    pub binarized: bool,
}

impl ExposureVector {
    /// Rows with a defined value.
    pub fn present(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|_| i)).collect()
    }

    pub fn write_csv<W: Write>(&self, residents: &ResidentTable, w: W) -> Result<()> {
        write_exposures(&[self], residents, w)
    }
}

/// Long-format CSV `id,definition,value`, empty value when missing.
pub fn write_exposures<W: Write>(exposures: &[&ExposureVector], residents: &ResidentTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id", "definition", "value"])?;
    for e in exposures {
        for (r, v) in residents.residents.iter().zip(&e.values) {
            let value = v.map(|x| x.to_string()).unwrap_or_default();
            wtr.write_record([r.id.as_str(), e.definition.as_str(), value.as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn weighted_exposure<F, G>(residents: &ResidentTable, weights: &DMatrix<f64>, include: F, value: G) -> Vec<Option<f64>>
where
    F: Fn(&Resident, &Resident) -> bool,
    G: Fn(&Resident, &Resident) -> f64,
{
    let rs = &residents.residents;
    (0..rs.len())
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..rs.len() {
                let w = weights[(i, j)];
                if w > 0.0 && i != j && include(&rs[i], &rs[j]) {
                    num += w * value(&rs[i], &rs[j]);
                    den += w;
                }
            }
            (den > 0.0).then(|| (num / den).clamp(0.0, 1.0))
        })
        .collect()
}

fn check_weights(residents: &ResidentTable, weights: &DMatrix<f64>) {
    assert_eq!(weights.nrows(), residents.len(), "weights must match the resident table");
    assert_eq!(weights.ncols(), residents.len(), "weights must match the resident table");
}

fn is_binary(weights: &DMatrix<f64>) -> bool {
    weights.iter().all(|&w| w == 0.0 || w == 1.0)
}

/// Weighted mean of `Y_j^(i)` over all peers with positive weight.
pub fn exposure_def1(residents: &ResidentTable, weights: &DMatrix<f64>) -> ExposureVector {
    check_weights(residents, weights);
    ExposureVector {
        values: weighted_exposure(residents, weights, |_, _| true, |i, j| observed_outcome(i, j) as f64),
        definition: "def1".into(),
        binarized: is_binary(weights),
    }
}

/// Weighted mean of `S_j` over peers who left strictly before `i`.
pub fn exposure_def2(residents: &ResidentTable, weights: &DMatrix<f64>) -> ExposureVector {
    check_weights(residents, weights);
    ExposureVector {
        values: weighted_exposure(residents, weights, |i, j| j.exit_day < i.exit_day, |_, j| j.graduated as f64),
        definition: "def2".into(),
        binarized: is_binary(weights),
    }
}

/// Definition-1 exposures restricted to white and to non-white peers.
pub fn exposure_by_race(residents: &ResidentTable, weights: &DMatrix<f64>) -> (ExposureVector, ExposureVector) {
    check_weights(residents, weights);
    let make = |white: u8, name: &str| ExposureVector {
        values: weighted_exposure(residents, weights, |_, j| j.white == white, |i, j| observed_outcome(i, j) as f64),
        definition: name.into(),
        binarized: is_binary(weights),
    };
    (make(1, "def1-white"), make(0, "def1-nonwhite"))
}

/// Parameters of the synthetic unit generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_residents: usize,
    pub expected_events: f64,
    pub window_days: i64,
    pub stay_mean: f64,
    pub stay_sd: f64,
    pub min_stay: i64,
    /// Effect of the definition-1 exposure on the graduation probability.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_residents: 337,
            expected_events: 7400.0,
            window_days: 1095,
            stay_mean: 150.0,
            stay_sd: 30.0,
            min_stay: 30,
            rho: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticUnit {
    pub residents: ResidentTable,
    pub events: EventLog,
    /// Latent community of each resident.
    pub community: Vec<usize>,
}

/// Simulate one unit. Two latent communities drive both who interacts with
/// whom (events arrive as a Poisson process over each pair's shared days) and
/// baseline graduation, so exposure and outcome are confounded by homophily.
/// Graduation is drawn in exit order so each resident's exposure only
/// depends on peers who already left.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticUnit> {
    let n = cfg.n_residents;
    if n < 2 || cfg.window_days < 1 || cfg.min_stay < 1 || cfg.min_stay > MAX_STAY_DAYS {
        return Err(Error::Config("synthetic unit needs n >= 2 and a positive window and stay".into()));
    }
    let mut rng = rng_from_seed(sub_seed(cfg.seed, 0));
    let stay = Normal::new(cfg.stay_mean, cfg.stay_sd).map_err(|e| Error::Config(e.to_string()))?;
    let age = Normal::<f64>::new(33.0, 9.0).expect("fixed parameters");
    let lsi = Normal::<f64>::new(25.0, 6.0).expect("fixed parameters");
    let mut community = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut residents = Vec::with_capacity(n);
    for i in 0..n {
        let c = rng.random_range(0..2usize);
        let sociability = 0.6 + 0.8 * rng.random::<f64>();
        let pos = if c == 0 { [0.8, 0.2] } else { [0.2, 0.8] };
        positions.push([pos[0] * sociability, pos[1] * sociability]);
        community.push(c);
        let entry = rng.random_range(0..cfg.window_days);
        let len = (stay.sample(&mut rng).round() as i64).clamp(cfg.min_stay, MAX_STAY_DAYS);
        let white_p = if c == 0 { 0.75 } else { 0.45 };
        residents.push(Resident {
            id: format!("r{:04}", i + 1),
            entry_day: entry,
            exit_day: entry + len,
            graduated: 0,
            age: age.sample(&mut rng).clamp(18.0, 70.0).round(),
            white: (rng.random::<f64>() < white_p) as u8,
            lsi: lsi.sample(&mut rng).clamp(0.0, 54.0).round(),
        });
    }

    let mut pairs = Vec::new();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let start = residents[i].entry_day.max(residents[j].entry_day);
            let end = residents[i].exit_day.min(residents[j].exit_day);
            if end > start {
                let affinity = positions[i][0] * positions[j][0] + positions[i][1] * positions[j][1];
                let mass = affinity * (end - start) as f64;
                total += mass;
                pairs.push((i, j, start, end, mass));
            }
        }
    }
    let rate = if total > 0.0 { cfg.expected_events / total } else { 0.0 };
    let mut events = Vec::new();
    let mut event_rng = rng_from_seed(sub_seed(cfg.seed, 1));
    for &(i, j, start, end, mass) in &pairs {
        let mean = rate * mass;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut event_rng) as usize;
        for _ in 0..count {
            let day = event_rng.random_range(start..end);
            let (s, r) = if event_rng.random::<bool>() { (i, j) } else { (j, i) };
            events.push(Event { sender: residents[s].id.clone(), receiver: residents[r].id.clone(), day });
        }
    }
    events.sort_by(|a, b| (a.day, &a.sender, &a.receiver).cmp(&(b.day, &b.sender, &b.receiver)));

    // Graduation in exit order; a resident's exposure uses only earlier leavers.
    let mut counts = DMatrix::<f64>::zeros(n, n);
    let lookup: HashMap<&str, usize> = residents.iter().enumerate().map(|(k, r)| (r.id.as_str(), k)).collect();
    for e in &events {
        let (s, r) = (lookup[e.sender.as_str()], lookup[e.receiver.as_str()]);
        counts[(s, r)] += 1.0;
        counts[(r, s)] += 1.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&k| (residents[k].exit_day, k));
    let mut grad_rng = rng_from_seed(sub_seed(cfg.seed, 2));
    for &i in &order {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let w = counts[(i, j)];
            if w > 0.0 {
                den += w;
                if residents[j].exit_day < residents[i].exit_day {
                    num += w * residents[j].graduated as f64;
                }
            }
        }
        let exposure = if den > 0.0 { num / den } else { 0.0 };
        let r = &residents[i];
        let p = 0.30 + 0.15 * (community[i] == 0) as u8 as f64 + cfg.rho * exposure + 0.004 * (r.age - 33.0)
            - 0.006 * (r.lsi - 25.0);
        let p = p.clamp(0.02, 0.98);
        residents[i].graduated = (grad_rng.random::<f64>() < p) as u8;
    }

    Ok(SyntheticUnit {
        residents: ResidentTable::new(residents, Some("day 0".into()))?,
        events: EventLog { events, kind: EventKind::Affirmations },
        community,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(id: &str, entry: i64, exit: i64, grad: u8, white: u8) -> Resident {
        Resident { id: id.into(), entry_day: entry, exit_day: exit, graduated: grad, age: 30.0, white, lsi: 20.0 }
    }

    fn ev(s: &str, r: &str, day: i64) -> Event {
        Event { sender: s.into(), receiver: r.into(), day }
    }

    fn table(rs: Vec<Resident>) -> ResidentTable {
        ResidentTable::new(rs, None).unwrap()
    }

    #[test]
    fn observed_outcome_rule() {
        let i = res("i", 0, 150, 0, 1);
        assert_eq!(observed_outcome(&i, &res("j", 0, 100, 1, 1)), 1);
        assert_eq!(observed_outcome(&i, &res("j", 0, 150, 1, 1)), 0);
        assert_eq!(observed_outcome(&i, &res("j", 0, 170, 1, 1)), 0);
    }

    #[test]
    fn adjacency_counts_both_directions() {
        let t = table(vec![res("a", 0, 100, 1, 1), res("b", 0, 100, 0, 1)]);
        let log = EventLog {
            events: vec![ev("a", "b", 1), ev("a", "b", 2), ev("b", "a", 3)],
            kind: EventKind::Affirmations,
        };
        let g = build_adjacency(&log, &t, false).unwrap();
        assert_eq!(g.weight(0, 1), 3.0);
        assert_eq!(g.weight(1, 0), 3.0);
        assert_eq!(build_adjacency(&log, &t, true).unwrap().weight(0, 1), 1.0);
        let sender = exposure_weights(&log, &t, TieWeights::SenderOnly, false).unwrap();
        assert_eq!(sender[(1, 0)], 2.0);
        assert_eq!(sender[(0, 1)], 1.0);
        let empty = EventLog { events: vec![], kind: EventKind::Affirmations };
        assert_eq!(build_adjacency(&empty, &t, false).unwrap(), Graph::empty(2));
    }

    #[test]
    fn bad_events_report_row() {
        let t = table(vec![res("a", 0, 100, 1, 1), res("b", 50, 120, 0, 1)]);
        let unknown = EventLog { events: vec![ev("a", "b", 60), ev("a", "zz", 60)], kind: EventKind::Corrections };
        match build_adjacency(&unknown, &t, false) {
            Err(Error::Row { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("zz"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let early = EventLog { events: vec![ev("a", "b", 10)], kind: EventKind::Affirmations };
        assert!(matches!(build_adjacency(&early, &t, false), Err(Error::Row { row: 1, .. })));
        let late = EventLog { events: vec![ev("a", "b", 100)], kind: EventKind::Affirmations };
        assert!(build_adjacency(&late, &t, false).is_err());
    }

    #[test]
    fn resident_validation() {
        assert!(ResidentTable::new(vec![res("a", 10, 10, 0, 0)], None).is_err());
        assert!(ResidentTable::new(vec![res("a", 0, 181, 0, 0)], None).is_err());
        assert!(ResidentTable::new(vec![res("a", 0, 180, 0, 0)], None).is_ok());
        assert!(ResidentTable::new(vec![res("a", 0, 10, 0, 0), res("a", 0, 20, 0, 0)], None).is_err());
    }

    #[test]
    fn weighted_mean_examples() {
        // ego exits last; peer b (weight 3) graduated earlier, peer c (weight 1) did not.
        let t = table(vec![res("ego", 0, 150, 0, 1), res("b", 0, 100, 1, 1), res("c", 0, 90, 0, 1)]);
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 3.0;
        w[(1, 0)] = 3.0;
        w[(0, 2)] = 1.0;
        w[(2, 0)] = 1.0;
        let e = exposure_def1(&t, &w);
        assert_eq!(e.values[0], Some(0.75));
        // b and c see nobody who left before them except c for b.
        assert_eq!(e.values[2], Some(0.0));
        assert_eq!(exposure_def2(&t, &w).values[0], Some(0.75));
        assert_eq!(exposure_def2(&t, &w).values[2], None);
    }

    #[test]
    fn def2_subset_example() {
        let t = table(vec![res("ego", 0, 150, 0, 1), res("early", 0, 100, 1, 1), res("late", 0, 170, 0, 1)]);
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 2.0;
        w[(1, 0)] = 2.0;
        w[(0, 2)] = 5.0;
        w[(2, 0)] = 5.0;
        assert_eq!(exposure_def2(&t, &w).values[0], Some(1.0));
        assert_eq!(exposure_def1(&t, &w).values[0], Some(2.0 / 7.0));
    }

    #[test]
    fn isolated_resident_is_missing() {
        let t = table(vec![res("a", 0, 100, 1, 1), res("b", 0, 100, 0, 1)]);
        let w = DMatrix::zeros(2, 2);
        assert_eq!(exposure_def1(&t, &w).values, vec![None, None]);
    }

    #[test]
    fn race_split() {
        let t = table(vec![res("ego", 0, 150, 0, 0), res("w1", 0, 100, 1, 1), res("w2", 0, 120, 1, 1)]);
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (white, nonwhite) = exposure_by_race(&t, &w);
        assert_eq!(white.values[0], Some(1.0));
        assert_eq!(nonwhite.values[0], None);
        assert_eq!(white.definition, "def1-white");
        assert!(white.binarized);
    }

    #[test]
    fn csv_round_trip_preserves_exposures() {
        let unit = generate_synthetic(&SyntheticConfig { n_residents: 60, expected_events: 800.0, seed: 5, ..Default::default() })
            .unwrap();
        let mut rbuf = Vec::new();
        unit.residents.write_csv(&mut rbuf).unwrap();
        let mut ebuf = Vec::new();
        unit.events.write_csv(&mut ebuf).unwrap();
        let t2 = ResidentTable::read_csv(rbuf.as_slice()).unwrap();
        let l2 = EventLog::read_csv(ebuf.as_slice(), EventKind::Affirmations).unwrap();
        assert_eq!(t2, unit.residents);
        assert_eq!(t2.epoch.as_deref(), Some("day 0"));
        let w1 = build_adjacency(&unit.events, &unit.residents, false).unwrap();
        let w2 = build_adjacency(&l2, &t2, false).unwrap();
        let a = exposure_def1(&unit.residents, w1.weights());
        let b = exposure_def1(&t2, w2.weights());
        assert_eq!(
            a.values.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>(),
            b.values.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>()
        );
        let mut xbuf = Vec::new();
        write_exposures(&[&a, &exposure_def2(&t2, w2.weights())], &t2, &mut xbuf).unwrap();
        let text = String::from_utf8(xbuf).unwrap();
        assert!(text.starts_with("id,definition,value\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 60);
    }

    #[test]
    fn synthetic_unit_volume() {
        let unit = generate_synthetic(&SyntheticConfig::default()).unwrap();
        assert_eq!(unit.residents.len(), 337);
        let m = unit.events.events.len() as f64;
        assert!((m - 7400.0).abs() < 5.0 * 7400f64.sqrt(), "events {m}");
        for r in &unit.residents.residents {
            assert!(r.exit_day - r.entry_day <= MAX_STAY_DAYS);
        }
        assert!(unit.events.resolve(&unit.residents).is_ok());
    }
}

use rand::Rng;

use super::ChartError;

/// Index triples `(i, j, k)`: `j` is a close sample and `k` a far sample for anchor `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Vec<usize>,
    pub close: Vec<usize>,
    pub far: Vec<usize>,
    pub t_close: f64,
    pub t_far: f64,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Checks every triple against the time conditions, returning the first offender.
    pub fn audit(&self, timestamps: &[f64]) -> Result<(), (usize, usize, usize)> {
        for n in 0..self.len() {
            let (i, j, k) = (self.anchors[n], self.close[n], self.far[n]);
            if !admissible(timestamps, i, j, k, self.t_close, self.t_far) {
                return Err((i, j, k));
            }
        }
        Ok(())
    }
}

/// `0 < |t_j - t_i| <= t_close` and `t_close < |t_k - t_i| <= t_far`, with distinct indices.
pub fn admissible(timestamps: &[f64], i: usize, j: usize, k: usize, t_close: f64, t_far: f64) -> bool {
    let dj = (timestamps[j] - timestamps[i]).abs();
    let dk = (timestamps[k] - timestamps[i]).abs();
    i != j && j != k && i != k && dj > 0.0 && dj <= t_close && dk > t_close && dk <= t_far
}

/// Candidate ranges for one anchor: `[lo, hi)` pairs on each side.
#[derive(Debug, Clone, Copy)]
struct Ranges {
    close: [(usize, usize); 2],
    far: [(usize, usize); 2],
}

fn range_len(r: &[(usize, usize); 2]) -> usize {
    r[0].1 - r[0].0 + r[1].1 - r[1].0
}

fn pick<R: Rng>(r: &[(usize, usize); 2], rng: &mut R) -> usize {
    let left = r[0].1 - r[0].0;
    let u = rng.random_range(0..range_len(r));
    if u < left {
        r[0].0 + u
    } else {
        r[1].0 + (u - left)
    }
}

/// Precomputed candidate ranges for fixed thresholds; draws any number of batches.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    valid: Vec<usize>,
    ranges: Vec<Ranges>,
    t_close: f64,
    t_far: f64,
}

impl TripletSampler {
    /// `timestamps` must be strictly increasing; `t_far` may be infinite.
    pub fn new(timestamps: &[f64], t_close: f64, t_far: f64) -> Result<Self, ChartError> {
        if !(t_close > 0.0) || !(t_far > t_close) {
            return Err(ChartError::InvalidConfig(format!("need 0 < T_c < T_f, got T_c = {t_close}, T_f = {t_far}")));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ChartError::InvalidConfig("timestamps must be strictly increasing".into()));
        }
        let n = timestamps.len();
        let mut valid = Vec::new();
        let mut ranges = Vec::new();
        for i in 0..n {
            let ti = timestamps[i];
            // Differences are monotone on each side of i, so partition points are exact.
            let before = &timestamps[..i];
            let after = &timestamps[i + 1..];
            let b_far = before.partition_point(|&t| ti - t > t_far);
            let b_close = before.partition_point(|&t| ti - t > t_close);
            let a_close = after.partition_point(|&t| t - ti <= t_close);
            let a_far = after.partition_point(|&t| t - ti <= t_far);
            let r = Ranges {
                close: [(b_close, i), (i + 1, i + 1 + a_close)],
                far: [(b_far, b_close), (i + 1 + a_close, i + 1 + a_far)],
            };
            if range_len(&r.close) > 0 && range_len(&r.far) > 0 {
                valid.push(i);
                ranges.push(r);
            }
        }
        if valid.is_empty() {
            return Err(ChartError::EmptyCandidate { t_close, t_far });
        }
        Ok(Self { valid, ranges, t_close, t_far })
    }

    /// Indices admitting both a close and a far sample.
    pub fn valid_anchors(&self) -> &[usize] {
        &self.valid
    }

    pub fn is_valid_anchor(&self, i: usize) -> bool {
        self.valid.binary_search(&i).is_ok()
    }

    pub fn thresholds(&self) -> (f64, f64) {
        (self.t_close, self.t_far)
    }

    fn draw_for<R: Rng>(&self, slot: usize, rng: &mut R) -> (usize, usize, usize) {
        let r = &self.ranges[slot];
        (self.valid[slot], pick(&r.close, rng), pick(&r.far, rng))
    }

    /// `count` triples with anchors uniform over the valid anchors.
    pub fn draw<R: Rng>(&self, count: usize, rng: &mut R) -> TripletBatch {
        self.draw_with_anchors(count, &[], 0, rng)
    }

    /// Like [`draw`](Self::draw), but the first `forced` triples take their anchor
    /// uniformly from `pool` (indices that are not valid anchors are ignored).
    pub fn draw_with_anchors<R: Rng>(&self, count: usize, pool: &[usize], forced: usize, rng: &mut R) -> TripletBatch {
        let slots: Vec<usize> = pool.iter().filter_map(|i| self.valid.binary_search(i).ok()).collect();
        let forced = if slots.is_empty() { 0 } else { forced.min(count) };
        let mut batch = TripletBatch {
            anchors: Vec::with_capacity(count),
            close: Vec::with_capacity(count),
            far: Vec::with_capacity(count),
            t_close: self.t_close,
            t_far: self.t_far,
        };
        for n in 0..count {
            let slot = if n < forced { slots[rng.random_range(0..slots.len())] } else { rng.random_range(0..self.valid.len()) };
            let (i, j, k) = self.draw_for(slot, rng);
            batch.anchors.push(i);
            batch.close.push(j);
            batch.far.push(k);
        }
        batch
    }
}

/// Draws `count` triples satisfying the time conditions.
pub fn sample_triplets<R: Rng>(timestamps: &[f64], t_close: f64, t_far: f64, count: usize, rng: &mut R) -> Result<TripletBatch, ChartError> {
    Ok(TripletSampler::new(timestamps, t_close, t_far)?.draw(count, rng))
}

/// Per-epoch `(T_c, T_f)`, linearly interpolated from `start` to `end`.
pub fn curriculum_schedule(start: (f64, f64), end: (f64, f64), epochs: usize) -> Result<Vec<(f64, f64)>, ChartError> {
    let bad = |why: &str| Err(ChartError::InvalidSchedule(format!("{why}: {start:?} -> {end:?}")));
    if end.0 > start.0 || end.1 > start.1 {
        return bad("thresholds may not grow");
    }
    if start.1.is_infinite() != end.1.is_infinite() {
        return bad("cannot interpolate between finite and infinite T_f");
    }
    if !(end.0 > 0.0) || !(end.1 > end.0) || !(start.1 > start.0) || start.0.is_nan() {
        return bad("need 0 < T_c < T_f at both ends");
    }
    let lerp = |a: f64, b: f64, s: f64| if a == b { a } else { a + (b - a) * s };
    Ok((0..epochs)
        .map(|e| {
            let s = if epochs > 1 { e as f64 / (epochs - 1) as f64 } else { 0.0 };
            let tf = lerp(start.1, end.1, s);
            (lerp(start.0, end.0, s), tf)
        })
        .collect())
}

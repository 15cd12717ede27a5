//! Linear-chain CRF over the three BIO tags: partition function, marginals and
//! Viterbi decoding.
//!
//! Tags are indexed `B = 0`, `I = 1`, `O = 2` (see [`crate::tags::Tag::index`]).
//! The log-potential of moving from `y[j-1]` to `y[j]` at position `j` is
//! `trans[y[j-1]][y[j]] + emission[j][y[j]]`, with `start` and `stop` scores at the
//! two ends of the chain.

use crate::tags::Tag;
use crate::tensor::{Mat, Scalar};

pub const NUM_TAGS: usize = 3;

/// Additive surrogate for an impossible transition.
pub const FORBIDDEN: f64 = -1e4;

const B: usize = 0;
const I: usize = 1;
const O: usize = 2;

/// Tag indices in decoding preference order for exact ties.
const PREFERENCE: [usize; NUM_TAGS] = [O, B, I];

/// `(from, to)` pairs that break BIO well-formedness.
pub fn forbidden_pairs() -> impl Iterator<Item = (usize, usize)> {
    [(O, I)].into_iter()
}

/// Tags that may not open a sequence.
pub fn forbidden_starts() -> impl Iterator<Item = usize> {
    [I].into_iter()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transitions<T> {
    pub start: [T; NUM_TAGS],
    pub trans: [[T; NUM_TAGS]; NUM_TAGS],
    pub stop: [T; NUM_TAGS],
}

impl<T: Scalar> Transitions<T> {
    pub fn zeros() -> Self {
        Self {
            start: [T::zero(); NUM_TAGS],
            trans: [[T::zero(); NUM_TAGS]; NUM_TAGS],
            stop: [T::zero(); NUM_TAGS],
        }
    }

    /// Builds from `1×3`, `3×3` and `1×3` matrices.
    pub fn from_mats(start: &Mat<T>, trans: &Mat<T>, stop: &Mat<T>) -> Self {
        let mut t = Self::zeros();
        for a in 0..NUM_TAGS {
            t.start[a] = start.data[a];
            t.stop[a] = stop.data[a];
            for b in 0..NUM_TAGS {
                t.trans[a][b] = trans.get(a, b);
            }
        }
        t
    }

    /// Pins `START→I` and `O→I` to [`FORBIDDEN`].
    pub fn forbid_invalid(&mut self) {
        let f = T::of(FORBIDDEN);
        for (a, b) in forbidden_pairs() {
            self.trans[a][b] = f;
        }
        for b in forbidden_starts() {
            self.start[b] = f;
        }
    }

    pub fn bio_constrained() -> Self {
        let mut t = Self::zeros();
        t.forbid_invalid();
        t
    }
}

fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

/// Forward log-scores `alpha[j][y]` (including `emission[j][y]`).
fn forward<T: Scalar>(em: &Mat<T>, t: &Transitions<T>) -> Vec<[T; NUM_TAGS]> {
    let m = em.rows;
    let mut alpha = vec![[T::zero(); NUM_TAGS]; m];
    for y in 0..NUM_TAGS {
        alpha[0][y] = t.start[y] + em.get(0, y);
    }
    let mut buf = [T::zero(); NUM_TAGS];
    for j in 1..m {
        for y in 0..NUM_TAGS {
            for a in 0..NUM_TAGS {
                buf[a] = alpha[j - 1][a] + t.trans[a][y];
            }
            alpha[j][y] = log_sum_exp(&buf) + em.get(j, y);
        }
    }
    alpha
}

/// Backward log-scores `beta[j][y]` (excluding `emission[j][y]`, including `stop`).
fn backward<T: Scalar>(em: &Mat<T>, t: &Transitions<T>) -> Vec<[T; NUM_TAGS]> {
    let m = em.rows;
    let mut beta = vec![[T::zero(); NUM_TAGS]; m];
    beta[m - 1] = t.stop;
    let mut buf = [T::zero(); NUM_TAGS];
    for j in (0..m - 1).rev() {
        for a in 0..NUM_TAGS {
            for b in 0..NUM_TAGS {
                buf[b] = t.trans[a][b] + em.get(j + 1, b) + beta[j + 1][b];
            }
            beta[j][a] = log_sum_exp(&buf);
        }
    }
    beta
}

/// `log Z`, summing over all `3^m` tag sequences.
pub fn log_partition<T: Scalar>(em: &Mat<T>, t: &Transitions<T>) -> T {
    assert!(em.rows >= 1, "CRF needs at least one position");
    assert_eq!(em.cols, NUM_TAGS);
    let alpha = forward(em, t);
    let last = alpha[em.rows - 1];
    let mut buf = [T::zero(); NUM_TAGS];
    for y in 0..NUM_TAGS {
        buf[y] = last[y] + t.stop[y];
    }
    log_sum_exp(&buf)
}

/// Posterior marginals, i.e. the gradient of `log Z` with respect to each potential.
#[derive(Debug, Clone)]
pub struct Marginals<T> {
    pub log_z: T,
    /// `m × 3`, `P(y_j = y)`
    pub unary: Mat<T>,
    /// `Σ_j P(y_{j-1} = a, y_j = b)`
    pub pair: [[T; NUM_TAGS]; NUM_TAGS],
    pub start: [T; NUM_TAGS],
    pub stop: [T; NUM_TAGS],
}

pub fn marginals<T: Scalar>(em: &Mat<T>, t: &Transitions<T>) -> Marginals<T> {
    let m = em.rows;
    let log_z = log_partition(em, t);
    let alpha = forward(em, t);
    let beta = backward(em, t);
    let mut unary = Mat::zeros(m, NUM_TAGS);
    for j in 0..m {
        for y in 0..NUM_TAGS {
            unary.set(j, y, (alpha[j][y] + beta[j][y] - log_z).exp());
        }
    }
    let mut pair = [[T::zero(); NUM_TAGS]; NUM_TAGS];
    for j in 1..m {
        for a in 0..NUM_TAGS {
            for b in 0..NUM_TAGS {
                let lp = alpha[j - 1][a] + t.trans[a][b] + em.get(j, b) + beta[j][b] - log_z;
                pair[a][b] = pair[a][b] + lp.exp();
            }
        }
    }
    let mut start = [T::zero(); NUM_TAGS];
    let mut stop = [T::zero(); NUM_TAGS];
    for y in 0..NUM_TAGS {
        start[y] = unary.get(0, y);
        stop[y] = unary.get(m - 1, y);
    }
    Marginals {
        log_z,
        unary,
        pair,
        start,
        stop,
    }
}

/// Unnormalised log-score of one tag-index sequence, accumulated left to right.
pub fn sequence_score<T: Scalar>(em: &Mat<T>, t: &Transitions<T>, tags: &[usize]) -> T {
    assert_eq!(tags.len(), em.rows, "tag sequence length must equal emission rows");
    let mut score = t.start[tags[0]];
    score = score + em.get(0, tags[0]);
    for j in 1..tags.len() {
        score = score + t.trans[tags[j - 1]][tags[j]];
        score = score + em.get(j, tags[j]);
    }
    score + t.stop[tags[tags.len() - 1]]
}

/// Maximum a-posteriori tag sequence and its score.
///
/// Among equally scoring sequences the one preferring `O`, then `B`, then `I`
/// at the earliest differing position wins.
pub fn viterbi<T: Scalar>(em: &Mat<T>, t: &Transitions<T>) -> (Vec<Tag>, T) {
    let m = em.rows;
    assert!(m >= 1, "CRF needs at least one position");
    // best[j][y]: best score of positions j+1..m given y_j = y, stop included
    let mut best = vec![[T::zero(); NUM_TAGS]; m];
    best[m - 1] = t.stop;
    for j in (0..m - 1).rev() {
        for a in 0..NUM_TAGS {
            let mut top = T::neg_infinity();
            for b in 0..NUM_TAGS {
                let s = t.trans[a][b] + em.get(j + 1, b) + best[j + 1][b];
                if s > top {
                    top = s;
                }
            }
            best[j][a] = top;
        }
    }

    let mut path = Vec::with_capacity(m);
    let pick = |score: &dyn Fn(usize) -> T| {
        let mut choice = PREFERENCE[0];
        let mut top = score(choice);
        for &y in &PREFERENCE[1..] {
            let s = score(y);
            if s > top {
                top = s;
                choice = y;
            }
        }
        choice
    };
    path.push(pick(&|y| t.start[y] + em.get(0, y) + best[0][y]));
    for j in 1..m {
        let prev = path[j - 1];
        path.push(pick(&|y| t.trans[prev][y] + em.get(j, y) + best[j][y]));
    }
    let score = sequence_score(em, t, &path);
    (path.into_iter().map(Tag::from_index).collect(), score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_potentials_count_paths() {
        let em = Mat::<f64>::zeros(2, NUM_TAGS);
        let z = log_partition(&em, &Transitions::zeros());
        assert!((z - 9f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn marginals_sum_to_one_per_position() {
        let em = Mat::from_vec(3, 3, vec![0.5, -1.0, 0.2, 1.5, 0.3, -0.2, 0.0, 0.7, 0.1]);
        let mut t = Transitions::<f64>::zeros();
        t.trans[0][1] = 0.8;
        t.forbid_invalid();
        let mg = marginals(&em, &t);
        for j in 0..3 {
            let s: f64 = mg.unary.row(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let pairs: f64 = mg.pair.iter().flatten().sum();
        assert!((pairs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_potentials_decode_to_all_outside() {
        let em = Mat::<f64>::zeros(4, NUM_TAGS);
        let (tags, score) = viterbi(&em, &Transitions::bio_constrained());
        assert_eq!(tags, vec![Tag::O; 4]);
        assert_eq!(score, 0.0);
    }
}

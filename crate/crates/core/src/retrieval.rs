//! Query-time retrieval: similarity search over class embeddings, ballot
//! filtering, and multi-winner approval elections over chunks.
//!
//! The classes most similar to the query become voters; each approves the
//! chunks it occurs in. An approval-based committee rule then elects `r`
//! chunks.

use serde::{Deserialize, Serialize};

use crate::alignment::linalg::{dot, norm2, Matrix};
use crate::alignment::AlignmentReport;
use crate::embedding;
use crate::error::{Error, Result};
use crate::gateway::{ModelGateway, Phase};
use crate::index::{IncidenceMatrix, Index};

/// Exact rules enumerate committees over at most this many approved chunks.
pub const MAX_EXACT_CANDIDATES: usize = 20;

const GAIN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub metric: Metric,
    pub k0: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Cosine,
            k0: 10,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k0 == 0 {
            return Err(Error::invalid("k0 must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectionRule {
    /// Approval voting: the `r` chunks with the most approvals.
    #[default]
    Av,
    PavGreedy,
    CcGreedy,
    ExactPav,
    ExactCc,
}

impl ElectionRule {
    pub fn is_exact(self) -> bool {
        matches!(self, ElectionRule::ExactPav | ElectionRule::ExactCc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElectionConfig {
    pub rule: ElectionRule,
    pub r: usize,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        Self {
            rule: ElectionRule::Av,
            r: 5,
        }
    }
}

impl ElectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::invalid("r must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: usize,
    /// Cosine similarity, or Euclidean distance for the Euclidean metric.
    pub score: f64,
}

/// Ranks the columns of `v` (`P x S`) against `q` and keeps the best
/// `min(k0, S)`. Ties go to the lower class id.
pub fn top_k_classes(v: &Matrix, q: &[f64], cfg: &SimilarityConfig) -> Result<Vec<ClassScore>> {
    cfg.validate()?;
    if q.len() != v.rows() {
        return Err(Error::DimensionMismatch {
            expected: v.rows(),
            got: q.len(),
        });
    }
    let s = v.cols();
    if cfg.k0 > s {
        log::debug!("k0 = {} exceeds {s} classes; using all of them", cfg.k0);
    }
    let q_norm = norm2(q);
    let mut scored: Vec<ClassScore> = (0..s)
        .map(|c| {
            let col = v.column(c);
            let score = match cfg.metric {
                Metric::Cosine => {
                    let denom = norm2(&col) * q_norm;
                    if denom == 0.0 {
                        0.0
                    } else {
                        dot(&col, q) / denom
                    }
                }
                Metric::Euclidean => col.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            };
            ClassScore { class_id: c, score }
        })
        .collect();
    scored.sort_by(|a, b| {
        let ord = match cfg.metric {
            Metric::Cosine => b.score.total_cmp(&a.score),
            Metric::Euclidean => a.score.total_cmp(&b.score),
        };
        ord.then(a.class_id.cmp(&b.class_id))
    });
    scored.truncate(cfg.k0.min(s));
    Ok(scored)
}

/// Approval ballots: one row per surviving class, one column per chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballots {
    pub voters: Vec<usize>,
    pub num_candidates: usize,
    pub approvals: Vec<Vec<bool>>,
}

impl Ballots {
    /// Ballots with voters numbered `0..rows.len()`.
    pub fn from_rows(rows: &[Vec<u8>], num_candidates: usize) -> Self {
        Self {
            voters: (0..rows.len()).collect(),
            num_candidates,
            approvals: rows
                .iter()
                .map(|r| {
                    assert_eq!(r.len(), num_candidates, "ballot width");
                    r.iter().map(|&b| b != 0).collect()
                })
                .collect(),
        }
    }

    pub fn num_voters(&self) -> usize {
        self.approvals.len()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.approvals
            .iter()
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }

    /// Approval count per candidate.
    pub fn approval_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_candidates];
        for row in &self.approvals {
            for (c, &a) in row.iter().enumerate() {
                counts[c] += a as usize;
            }
        }
        counts
    }
}

/// Keeps the incidence rows of the selected classes (ascending class id) as
/// ballots over all chunks.
pub fn filter_ballots(incidence: &IncidenceMatrix, selected: &[usize]) -> Ballots {
    let mut voters: Vec<usize> = selected.to_vec();
    voters.sort_unstable();
    voters.dedup();
    let k = incidence.num_chunks();
    let approvals = voters
        .iter()
        .map(|&s| (0..k).map(|chunk| incidence.get(chunk, s)).collect())
        .collect();
    Ballots {
        voters,
        num_candidates: k,
        approvals,
    }
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|j| 1.0 / j as f64).sum()
}

fn approved_counts(ballots: &Ballots, committee: &[usize]) -> Vec<usize> {
    ballots
        .approvals
        .iter()
        .map(|row| committee.iter().filter(|&&c| row[c]).count())
        .collect()
}

/// Committee value under `rule`: total approvals for AV, harmonic
/// satisfaction for PAV, covered voters for CC.
pub fn committee_score(ballots: &Ballots, committee: &[usize], rule: ElectionRule) -> f64 {
    let counts = approved_counts(ballots, committee);
    match rule {
        ElectionRule::Av => counts.iter().sum::<usize>() as f64,
        ElectionRule::PavGreedy | ElectionRule::ExactPav => counts.iter().map(|&n| harmonic(n)).sum(),
        ElectionRule::CcGreedy | ElectionRule::ExactCc => counts.iter().filter(|&&n| n > 0).count() as f64,
    }
}

fn marginal_gain(ballots: &Ballots, counts: &[usize], candidate: usize, pav: bool) -> f64 {
    ballots
        .approvals
        .iter()
        .zip(counts)
        .filter(|(row, _)| row[candidate])
        .map(|(_, &n)| {
            if pav {
                1.0 / (n + 1) as f64
            } else {
                (n == 0) as u8 as f64
            }
        })
        .sum()
}

/// Orders `pool` by repeatedly taking the largest marginal gain (lowest id on
/// ties), stopping after `take` picks.
fn greedy_order(ballots: &Ballots, pool: &[usize], take: usize, pav: bool) -> Vec<usize> {
    let mut counts = vec![0usize; ballots.num_voters()];
    let mut remaining: Vec<usize> = pool.to_vec();
    remaining.sort_unstable();
    let mut picked = Vec::with_capacity(take);
    while picked.len() < take && !remaining.is_empty() {
        let mut best = 0;
        let mut best_gain = f64::NEG_INFINITY;
        for (i, &c) in remaining.iter().enumerate() {
            let g = marginal_gain(ballots, &counts, c, pav);
            if g > best_gain + GAIN_TIE_TOL {
                best = i;
                best_gain = g;
            }
        }
        let c = remaining.remove(best);
        for (row, n) in ballots.approvals.iter().zip(counts.iter_mut()) {
            if row[c] {
                *n += 1;
            }
        }
        picked.push(c);
    }
    picked
}

/// Integer PAV score scaled by `lcm(1..=max_count)`; exact for comparisons.
fn pav_score_scaled(ballots: &Ballots, committee: &[usize], lcm: u64) -> u64 {
    approved_counts(ballots, committee)
        .into_iter()
        .map(|n| (1..=n as u64).map(|j| lcm / j).sum::<u64>())
        .sum()
}

fn lcm_upto(n: usize) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=n as u64).fold(1, |acc, j| acc / gcd(acc, j) * j)
}

fn exact_committee(ballots: &Ballots, pool: &[usize], size: usize, pav: bool) -> Vec<usize> {
    let lcm = lcm_upto(size.max(1));
    let score = |committee: &[usize]| -> u64 {
        if pav {
            pav_score_scaled(ballots, committee, lcm)
        } else {
            approved_counts(ballots, committee).iter().filter(|&&n| n > 0).count() as u64
        }
    };

    let n = pool.len();
    let mut idx: Vec<usize> = (0..size).collect();
    let mut best: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
    let mut best_score = score(&best);
    if size == 0 || size > n {
        return best;
    }
    // lexicographic k-combinations of the pool
    loop {
        let mut i = size;
        while i > 0 && idx[i - 1] == i - 1 + n - size {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
        let committee: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
        let s = score(&committee);
        if s > best_score {
            best_score = s;
            best = committee;
        }
    }
    best
}

/// Elects `min(r, K)` distinct chunks from the ballots.
///
/// Only chunks with at least one approval compete; if fewer than `r` exist,
/// the remainder is filled with unapproved chunks in id order. Winners are
/// listed in greedy-pick order (for AV: by approval count).
pub fn elect_chunks(ballots: &Ballots, cfg: &ElectionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let k = ballots.num_candidates;
    let target = cfg.r.min(k);
    let counts = ballots.approval_counts();
    let approved: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let take = target.min(approved.len());

    let mut elected = match cfg.rule {
        ElectionRule::Av => {
            let mut order = approved.clone();
            order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            order.truncate(take);
            order
        }
        ElectionRule::PavGreedy => greedy_order(ballots, &approved, take, true),
        ElectionRule::CcGreedy => greedy_order(ballots, &approved, take, false),
        ElectionRule::ExactPav | ElectionRule::ExactCc => {
            if approved.len() > MAX_EXACT_CANDIDATES {
                return Err(Error::invalid(format!(
                    "exact rules support at most {MAX_EXACT_CANDIDATES} approved chunks, got {}",
                    approved.len()
                )));
            }
            let pav = cfg.rule == ElectionRule::ExactPav;
            let committee = exact_committee(ballots, &approved, take, pav);
            greedy_order(ballots, &committee, take, pav)
        }
    };

    for c in 0..k {
        if elected.len() >= target {
            break;
        }
        if counts[c] == 0 {
            elected.push(c);
        }
    }
    Ok(elected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalStatus {
    Ok,
    /// The index has no classes, so nothing could vote.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub chunk_id: usize,
    /// Approvals from surviving classes (for aligned retrieval: incident
    /// strength mass).
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub status: RetrievalStatus,
    pub selected_classes: Vec<ClassScore>,
    pub filtered_ballots: Ballots,
    pub elected_chunks: Vec<usize>,
    /// Set when some elected chunk has no approval (there were fewer than
    /// `r` approved chunks).
    pub padded: bool,
    pub rule_scores: Vec<ChunkScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentReport>,
}

impl RetrievalResult {
    pub fn empty(num_chunks: usize) -> Self {
        Self {
            status: RetrievalStatus::Empty,
            selected_classes: Vec::new(),
            filtered_ballots: Ballots {
                voters: Vec::new(),
                num_candidates: num_chunks,
                approvals: Vec::new(),
            },
            elected_chunks: Vec::new(),
            padded: false,
            rule_scores: Vec::new(),
            alignment: None,
        }
    }
}

/// Embeds `query_text` with the index's embedder configuration.
pub fn embed_query(index: &Index, query_text: &str, gateway: Option<&ModelGateway>) -> Result<Vec<f64>> {
    let mut vecs = embedding::embed(
        &[query_text.to_string()],
        &index.config().embedding,
        gateway,
        Phase::Query,
    )?;
    let q = vecs.pop().expect("one embedding per input").0;
    if q.len() != index.dim() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            got: q.len(),
        });
    }
    Ok(q)
}

/// Embed, rank classes, filter ballots, elect.
pub fn retrieve(
    index: &Index,
    query_text: &str,
    sim: &SimilarityConfig,
    election: &ElectionConfig,
    gateway: Option<&ModelGateway>,
) -> Result<RetrievalResult> {
    sim.validate()?;
    election.validate()?;
    if index.num_classes() == 0 {
        return Ok(RetrievalResult::empty(index.num_chunks()));
    }
    let q = embed_query(index, query_text, gateway)?;
    retrieve_with_vector(index, &q, sim, election)
}

pub fn retrieve_with_vector(
    index: &Index,
    q: &[f64],
    sim: &SimilarityConfig,
    election: &ElectionConfig,
) -> Result<RetrievalResult> {
    if index.num_classes() == 0 {
        return Ok(RetrievalResult::empty(index.num_chunks()));
    }
    let v = index.embedding_matrix();
    let selected_classes = top_k_classes(&v, q, sim)?;
    let ids: Vec<usize> = selected_classes.iter().map(|c| c.class_id).collect();
    let ballots = filter_ballots(index.incidence(), &ids);
    let elected = elect_chunks(&ballots, election)?;

    let counts = ballots.approval_counts();
    let padded = elected.iter().any(|&c| counts[c] == 0);
    let rule_scores = elected
        .iter()
        .map(|&c| ChunkScore {
            chunk_id: c,
            score: counts[c] as f64,
        })
        .collect();
    Ok(RetrievalResult {
        status: RetrievalStatus::Ok,
        selected_classes,
        filtered_ballots: ballots,
        elected_chunks: elected,
        padded,
        rule_scores,
        alignment: None,
    })
}

/// Orthogonal projection of `q` onto the column space of `v`, with the
/// squared distances of every column to `q` and to the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDiagnostic {
    pub q_hat: Vec<f64>,
    pub residual_sq: f64,
    pub dist_sq_to_q: Vec<f64>,
    pub dist_sq_to_q_hat: Vec<f64>,
}

/// Diagnostic only: ranking by distance to `q` and to `q_hat = V V^+ q`
/// agree, since the two squared distances differ by `||q - q_hat||^2`.
pub fn projection_diagnostic(v: &Matrix, q: &[f64]) -> Result<ProjectionDiagnostic> {
    if q.len() != v.rows() {
        return Err(Error::DimensionMismatch {
            expected: v.rows(),
            got: q.len(),
        });
    }
    let pinv = v.pseudoinverse()?;
    let q_hat = v.matvec(&pinv.matvec(q));
    let residual_sq = q.iter().zip(&q_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let dist = |target: &[f64]| -> Vec<f64> {
        (0..v.cols())
            .map(|c| v.column(c).iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    };
    Ok(ProjectionDiagnostic {
        dist_sq_to_q: dist(q),
        dist_sq_to_q_hat: dist(&q_hat),
        q_hat,
        residual_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_v() -> Matrix {
        Matrix::from_rows(&[[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
    }

    fn example_c() -> IncidenceMatrix {
        IncidenceMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 1]])
    }

    #[test]
    fn cosine_ranking_on_worked_example() {
        let cfg = SimilarityConfig {
            metric: Metric::Cosine,
            k0: 3,
        };
        let top = top_k_classes(&example_v(), &[1.0, 1.0], &cfg).unwrap();
        let ids: Vec<_> = top.iter().map(|c| c.class_id).collect();
        assert_eq!(ids, vec![2, 0, 1]);
        assert!((top[0].score - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((top[1].score - h).abs() < 1e-12 && (top[2].score - h).abs() < 1e-12);
    }

    #[test]
    fn k0_clamps_to_class_count() {
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let top = top_k_classes(&example_v(), &[0.3, -2.0], &SimilarityConfig { metric, k0: 50 }).unwrap();
            assert_eq!(top.len(), 3);
        }
    }

    #[test]
    fn euclidean_exact_match_first() {
        let cfg = SimilarityConfig {
            metric: Metric::Euclidean,
            k0: 1,
        };
        let top = top_k_classes(&example_v(), &[0.0, 1.0], &cfg).unwrap();
        assert_eq!(
            top,
            vec![ClassScore {
                class_id: 1,
                score: 0.0
            }]
        );
    }

    #[test]
    fn dimension_mismatch() {
        let err = top_k_classes(&example_v(), &[1.0], &SimilarityConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn filter_examples() {
        let c = example_c();
        assert_eq!(
            filter_ballots(&c, &[0, 1, 2]).to_rows(),
            vec![vec![1, 0], vec![0, 1], vec![1, 1]]
        );
        let none = filter_ballots(&c, &[]);
        assert_eq!(none.num_voters(), 0);
        assert_eq!(none.num_candidates, 2);
        let some = filter_ballots(&c, &[2, 0]);
        assert_eq!(some.to_rows(), vec![vec![1, 0], vec![1, 1]]);
        assert_eq!(some.voters, vec![0, 2]);
    }

    #[test]
    fn av_picks_most_approved() {
        let b = Ballots::from_rows(&[vec![1, 0], vec![1, 1]], 2);
        let cfg = ElectionConfig {
            rule: ElectionRule::Av,
            r: 1,
        };
        assert_eq!(elect_chunks(&b, &cfg).unwrap(), vec![0]);
    }

    #[test]
    fn single_voter_approving_everything() {
        let b = Ballots::from_rows(&[vec![1, 1, 1]], 3);
        for rule in [
            ElectionRule::Av,
            ElectionRule::PavGreedy,
            ElectionRule::CcGreedy,
            ElectionRule::ExactPav,
            ElectionRule::ExactCc,
        ] {
            assert_eq!(
                elect_chunks(&b, &ElectionConfig { rule, r: 2 }).unwrap(),
                vec![0, 1],
                "{rule:?}"
            );
        }
    }

    #[test]
    fn pav_prefers_proportional_committee() {
        // two voters like {0,1}, two like {2}; AV takes 0 and 1 on id order,
        // PAV gives the second group its chunk
        let b = Ballots::from_rows(&[vec![1, 1, 0], vec![1, 1, 0], vec![0, 0, 1], vec![0, 0, 1]], 3);
        let av = elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::Av,
                r: 2,
            },
        )
        .unwrap();
        assert_eq!(av, vec![0, 1]);
        let pav = elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::PavGreedy,
                r: 2,
            },
        )
        .unwrap();
        assert_eq!(pav, vec![0, 2]);
        let cc = elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::ExactCc,
                r: 2,
            },
        )
        .unwrap();
        assert_eq!(cc, vec![0, 2]);
    }

    #[test]
    fn padding_when_few_approved() {
        let b = Ballots::from_rows(&[vec![0, 0, 1, 0]], 4);
        for rule in [ElectionRule::Av, ElectionRule::CcGreedy, ElectionRule::ExactPav] {
            let e = elect_chunks(&b, &ElectionConfig { rule, r: 3 }).unwrap();
            assert_eq!(e, vec![2, 0, 1]);
        }
    }

    #[test]
    fn cc_greedy_prefers_approved_over_lower_unapproved() {
        // after chunk 2 covers the only voter, chunk 3 (approved, zero gain)
        // still beats unapproved chunk 0
        let b = Ballots::from_rows(&[vec![0, 0, 1, 1]], 4);
        let e = elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::CcGreedy,
                r: 2,
            },
        )
        .unwrap();
        assert_eq!(e, vec![2, 3]);
    }

    #[test]
    fn r_clamped_to_candidate_count_and_zero_rejected() {
        let b = Ballots::from_rows(&[vec![1, 0]], 2);
        assert_eq!(
            elect_chunks(
                &b,
                &ElectionConfig {
                    rule: ElectionRule::Av,
                    r: 9
                }
            )
            .unwrap()
            .len(),
            2
        );
        assert!(elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::Av,
                r: 0
            }
        )
        .is_err());
    }

    #[test]
    fn exact_refuses_large_pools() {
        let b = Ballots::from_rows(&[vec![1; 21]], 21);
        let err = elect_chunks(
            &b,
            &ElectionConfig {
                rule: ElectionRule::ExactCc,
                r: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn lcm_values() {
        assert_eq!(lcm_upto(1), 1);
        assert_eq!(lcm_upto(3), 6);
        assert_eq!(lcm_upto(10), 2520);
        assert_eq!(lcm_upto(20), 232_792_560);
    }

    fn ballots_strategy() -> impl Strategy<Value = (Vec<Vec<u8>>, usize)> {
        (1usize..7, 1usize..8)
            .prop_flat_map(|(voters, k)| (prop::collection::vec(prop::collection::vec(0u8..2, k), voters), Just(k)))
    }

    proptest! {
        #[test]
        fn av_invariant_under_voter_permutation((rows, k) in ballots_strategy(), r in 1usize..5, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let cfg = ElectionConfig { rule: ElectionRule::Av, r };
            let base = elect_chunks(&Ballots::from_rows(&rows, k), &cfg).unwrap();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
            prop_assert_eq!(elect_chunks(&Ballots::from_rows(&shuffled, k), &cfg).unwrap(), base);
        }

        #[test]
        fn elected_chunks_distinct_and_sized((rows, k) in ballots_strategy(), r in 1usize..10) {
            let b = Ballots::from_rows(&rows, k);
            for rule in [ElectionRule::Av, ElectionRule::PavGreedy, ElectionRule::CcGreedy, ElectionRule::ExactPav, ElectionRule::ExactCc] {
                let e = elect_chunks(&b, &ElectionConfig { rule, r }).unwrap();
                prop_assert_eq!(e.len(), r.min(k));
                let mut d = e.clone();
                d.sort_unstable();
                d.dedup();
                prop_assert_eq!(d.len(), e.len());
                let counts = b.approval_counts();
                let approved = counts.iter().filter(|&&c| c > 0).count();
                if approved >= r.min(k) {
                    prop_assert!(e.iter().all(|&c| counts[c] > 0));
                }
            }
        }
    }
}

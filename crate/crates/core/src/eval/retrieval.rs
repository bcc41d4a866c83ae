//! Frame retrieval mAP@K and Kendall's τ.

use std::fmt;
use std::str::FromStr;

use super::EvalVideo;
use crate::alignment::sync_map;
use crate::data::View;
use crate::error::{Error, Result};
use crate::tensor::{dot, l2_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetrievalScope {
    /// Gallery: every test frame outside the query's own video.
    Regular,
    /// Ego queries against an exo gallery.
    Ego2Exo,
    /// Exo queries against an ego gallery.
    Exo2Ego,
}

impl RetrievalScope {
    pub const ALL: [RetrievalScope; 3] = [Self::Regular, Self::Ego2Exo, Self::Exo2Ego];
}

impl fmt::Display for RetrievalScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::Regular => "regular",
            Self::Ego2Exo => "ego2exo",
            Self::Exo2Ego => "exo2ego",
        })
    }
}

impl FromStr for RetrievalScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Self::Regular),
            "ego2exo" => Ok(Self::Ego2Exo),
            "exo2ego" => Ok(Self::Exo2Ego),
            _ => Err(Error::Config(format!("unknown retrieval scope {s:?}"))),
        }
    }
}

/// Fraction of the first `k` retrieved labels equal to the query label.
pub fn ap_at_k(query: usize, ranked: &[usize], k: usize) -> f64 {
    ranked.iter().take(k).filter(|&&l| l == query).count() as f64 / k as f64
}

/// One retrieved gallery frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub video: usize,
    pub frame: usize,
    pub label: usize,
    pub similarity: f64,
}

/// Ranked hits for one query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub video: usize,
    pub frame: usize,
    pub label: usize,
    pub hits: Vec<Hit>,
}

fn unit(row: &[f64]) -> Vec<f64> {
    let n = l2_norm(row);
    if n == 0.0 {
        row.to_vec()
    } else {
        row.iter().map(|v| v / n).collect()
    }
}

fn in_gallery(scope: RetrievalScope, query: &EvalVideo, qi: usize, cand: &EvalVideo, ci: usize) -> bool {
    match scope {
        RetrievalScope::Regular => qi != ci,
        RetrievalScope::Ego2Exo | RetrievalScope::Exo2Ego => query.view != cand.view,
    }
}

fn is_query(scope: RetrievalScope, v: &EvalVideo) -> bool {
    match scope {
        RetrievalScope::Regular => true,
        RetrievalScope::Ego2Exo => v.view == View::Ego,
        RetrievalScope::Exo2Ego => v.view == View::Exo,
    }
}

/// Ranks the gallery by cosine similarity for every query frame and keeps
/// the top `k`. Ties keep gallery order (video, then frame).
pub fn retrieve(videos: &[EvalVideo], k: usize, scope: RetrievalScope) -> Result<Vec<QueryResult>> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let units: Vec<Vec<Vec<f64>>> = videos
        .iter()
        .map(|v| v.embeddings.iter_rows().map(unit).collect())
        .collect();
    let labels: Vec<Vec<usize>> = videos.iter().map(EvalVideo::labels).collect();
    let mut out = Vec::new();
    for (qi, q) in videos.iter().enumerate() {
        if !is_query(scope, q) {
            continue;
        }
        let gallery: Vec<(usize, usize)> = videos
            .iter()
            .enumerate()
            .filter(|(ci, c)| in_gallery(scope, q, qi, c, *ci))
            .flat_map(|(ci, c)| (0..c.len()).map(move |f| (ci, f)))
            .collect();
        if gallery.len() < k {
            return Err(Error::Eval(format!(
                "gallery for {} has {} frames, fewer than k = {k}",
                q.id,
                gallery.len()
            )));
        }
        for (qf, qrow) in units[qi].iter().enumerate() {
            let mut hits: Vec<Hit> = gallery
                .iter()
                .map(|&(ci, cf)| Hit {
                    video: ci,
                    frame: cf,
                    label: labels[ci][cf],
                    similarity: dot(qrow, &units[ci][cf]),
                })
                .collect();
            hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
            hits.truncate(k);
            out.push(QueryResult {
                video: qi,
                frame: qf,
                label: labels[qi][qf],
                hits,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Eval(format!("no query frames for scope {scope}")));
    }
    Ok(out)
}

/// Mean over query frames of [`ap_at_k`].
pub fn map_at_k(videos: &[EvalVideo], k: usize, scope: RetrievalScope) -> Result<f64> {
    let results = retrieve(videos, k, scope)?;
    let total: f64 = results
        .iter()
        .map(|r| {
            let ranked: Vec<usize> = r.hits.iter().map(|h| h.label).collect();
            ap_at_k(r.label, &ranked, k)
        })
        .sum();
    Ok(total / results.len() as f64)
}

/// Order agreement of a frame map: `(concordant - discordant) / C(n, 2)`.
pub fn tau_of_map(map: &[usize]) -> f64 {
    let n = map.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            score += match map[j].cmp(&map[i]) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

/// Mean τ over ordered pairs of distinct videos, mapping every frame of the
/// first to its nearest neighbour in the second. Videos with fewer than two
/// frames are skipped and reported in the returned warnings.
pub fn kendall_tau(videos: &[EvalVideo]) -> Result<(f64, Vec<String>)> {
    let mut warnings = Vec::new();
    let usable: Vec<&EvalVideo> = videos
        .iter()
        .filter(|v| {
            let ok = v.len() >= 2;
            if !ok {
                warnings.push(format!("skipping {}: {} frame(s)", v.id, v.len()));
            }
            ok
        })
        .collect();
    if usable.len() < 2 {
        return Err(Error::Eval(format!(
            "Kendall's tau needs at least 2 videos with 2+ frames, got {}",
            usable.len()
        )));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, u) in usable.iter().enumerate() {
        for (j, v) in usable.iter().enumerate() {
            if i == j {
                continue;
            }
            let m = sync_map(&u.embeddings, &v.embeddings)?;
            total += tau_of_map(&m.map);
            pairs += 1;
        }
    }
    Ok((total / pairs as f64, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor2;

    #[test]
    fn ap_example() {
        // query A = 0, top-5 [A, B, A, A, B]
        assert!((ap_at_k(0, &[0, 1, 0, 0, 1], 5) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn tau_identities() {
        assert_eq!(tau_of_map(&[0, 1, 2, 3]), 1.0);
        assert_eq!(tau_of_map(&[3, 2, 1, 0]), -1.0);
        assert_eq!(tau_of_map(&[0, 0, 0]), 0.0);
    }

    fn video(id: &str, view: View, rows: &[[f64; 2]], events: Vec<usize>) -> EvalVideo {
        EvalVideo {
            id: id.into(),
            view,
            embeddings: Tensor2::from_rows(rows).unwrap(),
            key_events: events,
        }
    }

    #[test]
    fn single_label_map_is_one() {
        let a = video("a", View::Ego, &[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], vec![]);
        let b = video("b", View::Exo, &[[1.0, 2.0], [-1.0, 0.5]], vec![]);
        for scope in RetrievalScope::ALL {
            assert_eq!(map_at_k(&[a.clone(), b.clone()], 2, scope).unwrap(), 1.0);
        }
    }

    #[test]
    fn small_gallery_is_error() {
        let a = video("a", View::Ego, &[[1.0, 0.0], [0.0, 1.0]], vec![]);
        let b = video("b", View::Exo, &[[1.0, 2.0]], vec![]);
        assert!(matches!(
            map_at_k(&[a, b], 2, RetrievalScope::Ego2Exo),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn tau_self_and_reverse() {
        let rows = [[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-0.6, 0.8]];
        let rev: Vec<[f64; 2]> = rows.iter().rev().copied().collect();
        let a = video("a", View::Ego, &rows, vec![]);
        let b = video("b", View::Exo, &rows, vec![]);
        let r = video("r", View::Exo, &rev, vec![]);
        assert_eq!(kendall_tau(&[a.clone(), b]).unwrap().0, 1.0);
        assert_eq!(kendall_tau(&[a.clone(), r]).unwrap().0, -1.0);
        let single = video("s", View::Ego, &[[1.0, 0.0]], vec![]);
        let (_, w) = kendall_tau(&[a.clone(), a.clone(), single]).unwrap();
        assert_eq!(w.len(), 1);
    }
}

//! Parameter-free modulo shuffles of rows (points) and columns (channels), and the
//! shuffled feature transform built from them.
//!
//! Both shuffles are stored as permutation vectors in gather form: output position
//! `k` reads input position `perm[k]`.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Matrix, Segments};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShuffleSpec {
    pub sample_groups: usize,
    pub channel_groups: usize,
}

impl Default for ShuffleSpec {
    fn default() -> Self {
        ShuffleSpec {
            sample_groups: 4,
            channel_groups: 4,
        }
    }
}

impl ShuffleSpec {
    pub fn new(sample_groups: usize, channel_groups: usize) -> Result<Self> {
        if sample_groups == 0 || channel_groups == 0 {
            return Err(Error::Config(format!(
                "shuffle groups must be >= 1, got {sample_groups} and {channel_groups}"
            )));
        }
        Ok(ShuffleSpec {
            sample_groups,
            channel_groups,
        })
    }

    pub fn identity() -> Self {
        ShuffleSpec {
            sample_groups: 1,
            channel_groups: 1,
        }
    }

    /// Errors unless `channel_groups` divides `width`.
    pub fn check_width(&self, width: usize) -> Result<()> {
        if width % self.channel_groups != 0 {
            return Err(Error::Divisibility {
                what: "channel width",
                value: width,
                groups: self.channel_groups,
            });
        }
        Ok(())
    }
}

/// Rows ordered by the key `(i mod g, i div g)`. For `g` dividing `n` this is the
/// reshape(g, n/g), transpose, flatten map; otherwise it degrades to the same sort.
pub fn sample_permutation(n: usize, g: usize) -> Vec<usize> {
    let g = g.max(1);
    let mut perm = Vec::with_capacity(n);
    for phase in 0..g.min(n) {
        perm.extend((phase..n).step_by(g));
    }
    perm
}

/// Column `j` moves to position `(j mod (d/g))·g + j div (d/g)`.
pub fn channel_permutation(d: usize, g: usize) -> Result<Vec<usize>> {
    if g == 0 || d % g != 0 {
        return Err(Error::Divisibility {
            what: "channel count",
            value: d,
            groups: g,
        });
    }
    let per = d / g;
    let mut perm = vec![0; d];
    for j in 0..d {
        perm[(j % per) * g + j / per] = j;
    }
    Ok(perm)
}

/// Sample permutation applied independently inside each row segment.
pub fn segmented_sample_permutation(segments: &Segments, g: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(segments.total_rows());
    for range in segments.iter() {
        let base = range.start;
        perm.extend(sample_permutation(range.len(), g).into_iter().map(|i| base + i));
    }
    perm
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

pub fn sample_shuffle(f: &Matrix, g: usize) -> Matrix {
    f.gather_rows(&sample_permutation(f.rows(), g))
        .expect("a permutation of the rows is always in range")
}

pub fn channel_shuffle(f: &Matrix, g: usize) -> Result<Matrix> {
    f.gather_cols(&channel_permutation(f.cols(), g)?)
}

/// Both outputs of the shuffled transform.
pub struct HerOutput<N> {
    /// `σ(p ⊕ f)`, the unshuffled branch.
    pub sigma: N,
    /// `channel_shuffle(σ(p ⊕ sample_shuffle(f)))`.
    pub shuffled: N,
}

/// Which of the two passes the mapping is being asked to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Sigma,
    Shuffled,
}

/// Runs the learnable mapping `sigma` on the coordinates concatenated with the
/// features, once as-is and once with the feature rows shuffled, then channel
/// shuffles the second result.
///
/// `segments` confines the sample shuffle to each row segment (pass a single
/// segment for a plain cloud). Coordinates are never shuffled.
pub fn her_transform<G, F>(
    graph: &mut G,
    f: &G::Node,
    p: &G::Node,
    segments: &Segments,
    spec: ShuffleSpec,
    mut sigma: F,
) -> Result<HerOutput<G::Node>>
where
    G: Graph,
    F: FnMut(&mut G, &G::Node, Branch) -> Result<G::Node>,
{
    let input = graph.concat_cols(p, f)?;
    let sigma_out = sigma(graph, &input, Branch::Sigma)?;
    let shuffled = her_shuffled(graph, f, p, segments, spec, |g, x| sigma(g, x, Branch::Shuffled))?;
    Ok(HerOutput {
        sigma: sigma_out,
        shuffled,
    })
}

/// The shuffled branch alone, as used at inference.
pub fn her_shuffled<G, F>(
    graph: &mut G,
    f: &G::Node,
    p: &G::Node,
    segments: &Segments,
    spec: ShuffleSpec,
    mut sigma: F,
) -> Result<G::Node>
where
    G: Graph,
    F: FnMut(&mut G, &G::Node) -> Result<G::Node>,
{
    let rows = graph.value(f).rows();
    if segments.total_rows() != rows {
        return Err(Error::Dimension {
            op: "her_transform segments",
            left: (rows, 0),
            right: (segments.total_rows(), 0),
        });
    }
    let f_hat = if spec.sample_groups > 1 {
        let perm: Rc<[usize]> = segmented_sample_permutation(segments, spec.sample_groups).into();
        graph.gather_rows(f, perm)?
    } else {
        f.clone()
    };
    let input = graph.concat_cols(p, &f_hat)?;
    let mapped = sigma(graph, &input)?;
    if spec.channel_groups > 1 {
        let perm: Rc<[usize]> = channel_permutation(graph.value(&mapped).cols(), spec.channel_groups)?.into();
        graph.gather_cols(&mapped, perm)
    } else {
        Ok(mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_order_for_two_groups() {
        assert_eq!(sample_permutation(6, 2), vec![0, 2, 4, 1, 3, 5]);
        assert_eq!(sample_permutation(5, 2), vec![0, 2, 4, 1, 3]);
        assert_eq!(sample_permutation(3, 1), vec![0, 1, 2]);
        assert_eq!(sample_permutation(3, 3), vec![0, 1, 2]);
        assert_eq!(sample_permutation(2, 5), vec![0, 1]);
    }

    #[test]
    fn channel_order_for_two_groups() {
        // columns a..f land as a, d, b, e, c, f
        assert_eq!(channel_permutation(6, 2).unwrap(), vec![0, 3, 1, 4, 2, 5]);
        assert!(matches!(channel_permutation(6, 4), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn segments_shuffle_independently() {
        let s = Segments::from_lengths(&[4, 3]);
        assert_eq!(segmented_sample_permutation(&s, 2), vec![0, 2, 1, 3, 4, 6, 5]);
    }
}

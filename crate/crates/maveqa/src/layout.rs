//! Attention structure between global tokens (one per segment) and long tokens.

use ndarray::Array2;

use crate::config::EncoderMode;

/// The four attention relations. Global `g` stands for segment `g`; long tokens are
/// indexed by sequence position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionLayout {
    pub g2g: Array2<bool>,
    pub g2l: Array2<bool>,
    pub l2g: Array2<bool>,
    pub l2l: Array2<bool>,
}

/// Position of each long token inside its segment.
pub fn positions_in_segment(segments: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(segments.len());
    for (i, &s) in segments.iter().enumerate() {
        let pos = if i > 0 && segments[i - 1] == s { out[i - 1] + 1 } else { 0 };
        out.push(pos);
    }
    out
}

/// Builds the layout for `n_global` segments. `segments[t]` is the segment of long
/// token `t`; tokens of one segment are contiguous.
pub fn build_attention_layout(segments: &[usize], n_global: usize, r: usize, mode: EncoderMode) -> AttentionLayout {
    let n = segments.len();
    let pos = positions_in_segment(segments);
    let g2g = Array2::from_elem((n_global, n_global), true);
    let g2l = Array2::from_shape_fn((n_global, n), |(g, t)| segments[t] == g);
    let l2g = Array2::from_elem((n, n_global), true);
    let l2l = match mode {
        EncoderMode::Flat => Array2::from_elem((n, n), true),
        EncoderMode::Structured => {
            Array2::from_shape_fn((n, n), |(t, u)| segments[t] == segments[u] && pos[t].abs_diff(pos[u]) <= r)
        }
    };
    AttentionLayout { g2g, g2l, l2g, l2l }
}

impl AttentionLayout {
    pub fn n_global(&self) -> usize {
        self.g2g.nrows()
    }

    pub fn n_long(&self) -> usize {
        self.l2l.nrows()
    }

    /// Combined mask over the sequence `[globals; long]`; `true` means "may attend".
    pub fn combined(&self) -> Array2<bool> {
        let g = self.n_global();
        let n = g + self.n_long();
        Array2::from_shape_fn((n, n), |(i, j)| match (i < g, j < g) {
            (true, true) => self.g2g[[i, j]],
            (true, false) => self.g2l[[i, j - g]],
            (false, true) => self.l2g[[i - g, j]],
            (false, false) => self.l2l[[i - g, j - g]],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l2l_rows(l: &AttentionLayout) -> Vec<Vec<usize>> {
        l.l2l.outer_iter().map(|row| row.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect()).collect()
    }

    #[test]
    fn radius_one_single_source() {
        let l = build_attention_layout(&[0, 0, 0], 1, 1, EncoderMode::Structured);
        assert_eq!(l2l_rows(&l), vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]);
    }

    #[test]
    fn no_edge_crosses_sources() {
        let l = build_attention_layout(&[0, 0, 0, 1, 1], 2, 10, EncoderMode::Structured);
        for t in 0..3 {
            for u in 3..5 {
                assert!(!l.l2l[[t, u]] && !l.l2l[[u, t]]);
            }
        }
        assert!(l.g2l[[0, 2]] && !l.g2l[[0, 3]] && l.g2l[[1, 4]]);
        let flat = build_attention_layout(&[0, 0, 0, 1, 1], 2, 0, EncoderMode::Flat);
        assert!(flat.l2l.iter().all(|&b| b));
    }

    #[test]
    fn positions_restart_per_segment() {
        assert_eq!(positions_in_segment(&[0, 0, 1, 1, 1, 2]), vec![0, 1, 0, 1, 2, 0]);
        assert!(positions_in_segment(&[]).is_empty());
    }

    fn segmentation() -> impl Strategy<Value = (Vec<usize>, usize)> {
        proptest::collection::vec(0usize..12, 1..8).prop_map(|lens| {
            let mut segs = Vec::new();
            for (s, len) in lens.iter().enumerate() {
                segs.extend(std::iter::repeat_n(s, *len));
            }
            segs.truncate(64);
            (segs, lens.len())
        })
    }

    proptest! {
        #[test]
        fn combined_mask_matches_predicates((segs, g) in segmentation(), r in 0usize..9) {
            let l = build_attention_layout(&segs, g, r, EncoderMode::Structured);
            let m = l.combined();
            let n = segs.len();
            for i in 0..g + n {
                for j in 0..g + n {
                    let want = match (i < g, j < g) {
                        (true, true) => true,
                        (true, false) => segs[j - g] == i,
                        (false, true) => true,
                        (false, false) => {
                            let (t, u) = (i - g, j - g);
                            let start_t = segs.iter().position(|&s| s == segs[t]).unwrap();
                            let start_u = segs.iter().position(|&s| s == segs[u]).unwrap();
                            segs[t] == segs[u] && ((t - start_t) as i64 - (u - start_u) as i64).unsigned_abs() as usize <= r
                        }
                    };
                    prop_assert_eq!(m[[i, j]], want);
                }
            }
        }
    }
}

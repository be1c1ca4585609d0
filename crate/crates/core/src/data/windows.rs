/// `seq_len` consecutive normalized points and the point that follows them.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub input: Vec<[f64; 2]>,
    pub target: [f64; 2],
    /// Index of the first input point in the source slice.
    pub start: usize,
}

/// Stride-1 sliding windows; yields `max(0, n - seq_len)` windows.
pub fn make_windows(points: &[[f64; 2]], seq_len: usize) -> Vec<Window> {
    if seq_len == 0 || points.len() <= seq_len {
        return Vec::new();
    }
    (0..points.len() - seq_len)
        .map(|start| Window { input: points[start..start + seq_len].to_vec(), target: points[start + seq_len], start })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| [i as f64, 0.0]).collect()
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&line(7), 6).len(), 1);
        assert!(make_windows(&line(6), 6).is_empty());
        let w = make_windows(&line(10), 6);
        assert_eq!(w.len(), 4);
        for (k, win) in w.iter().enumerate() {
            assert_eq!(win.start, k);
            assert_eq!(win.input[0][0], k as f64);
            assert_eq!(win.target[0], (k + 6) as f64);
        }
    }
}

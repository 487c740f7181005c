//! Synthetic reset traces with the morphologies seen on irradiated chips:
//! bunches of watchdog resets inside GPIO test windows, and sparse resets.

/// Windows of `cycle` seconds repeating every `cycle + gap` on `[start, end)`.
pub fn test_windows(start: f64, end: f64, cycle: f64, gap: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let s = start + f64::from(k) * (cycle + gap);
        if s >= end {
            return out;
        }
        out.push((s, (s + cycle).min(end)));
        k += 1;
    }
}

/// One reset every `period` inside each window, first one `offset` after the
/// window opens.
pub fn bunched(windows: &[(f64, f64)], period: f64, offset: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for &(s, e) in windows {
        let mut i = 0u32;
        loop {
            let t = s + offset + f64::from(i) * period;
            if t >= e {
                break;
            }
            out.push(t);
            i += 1;
        }
    }
    out
}

/// `n` resets spread evenly over `[start, end)`, half a spacing from each edge.
pub fn scattered(start: f64, end: f64, n: usize) -> Vec<f64> {
    let step = (end - start) / n as f64;
    (0..n).map(|i| start + (i as f64 + 0.5) * step).collect()
}

/// Merge of two sorted traces.
pub fn merge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bunches_of_six_every_eighty_seconds() {
        let w = test_windows(0.0, 7200.0, 40.0, 40.0);
        assert_eq!(w.len(), 90);
        let b = bunched(&w, 7.0, 0.0);
        assert_eq!(b.len(), 540);
        assert_eq!(&b[..7], &[0.0, 7.0, 14.0, 21.0, 28.0, 35.0, 80.0]);
    }

    #[test]
    fn scattered_is_sparse() {
        let s = scattered(0.0, 7200.0, 8);
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], 450.0);
        assert!(s.windows(2).all(|w| w[1] - w[0] == 900.0));
    }
}

//! RGB to HSV conversion and the per-segment color summaries.

/// RGB in [0,1] to (h, s, v) with hue normalized to [0, 1).
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, v)
}

pub const HUE_BINS: usize = 6;
pub const SAT_BINS: usize = 4;
pub const VAL_BINS: usize = 4;
pub const HSV_HIST_DIM: usize = HUE_BINS + SAT_BINS + VAL_BINS;

fn bin_of(v: f64, n: usize) -> usize {
    ((v * n as f64) as usize).min(n - 1)
}

/// Normalized hue/saturation/value histograms (each sub-histogram sums to 1)
/// followed by the mean HSV triple.
pub fn color_summary(colors: impl Iterator<Item = [f64; 3]>) -> ([f64; HSV_HIST_DIM], [f64; 3]) {
    let mut hist = [0.0; HSV_HIST_DIM];
    let mut mean = [0.0; 3];
    let mut n = 0usize;
    for c in colors {
        let (h, s, v) = rgb_to_hsv(c[0], c[1], c[2]);
        hist[bin_of(h, HUE_BINS)] += 1.0;
        hist[HUE_BINS + bin_of(s, SAT_BINS)] += 1.0;
        hist[HUE_BINS + SAT_BINS + bin_of(v, VAL_BINS)] += 1.0;
        mean[0] += h;
        mean[1] += s;
        mean[2] += v;
        n += 1;
    }
    if n > 0 {
        for x in hist.iter_mut() {
            *x /= n as f64;
        }
        for x in mean.iter_mut() {
            *x /= n as f64;
        }
    }
    (hist, mean)
}

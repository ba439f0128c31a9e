//! SVG overlay plots: the signal drawn as dotted samples colored by a
//! violet-to-yellow importance ramp.

/// Five-stop piecewise-linear ramp from violet (no importance) to yellow
/// (maximal importance). Versioned constants: plot tests assert on the
/// endpoint colors.
pub const COLOR_RAMP: [(f64, [u8; 3]); 5] = [
    (0.00, [0x7F, 0x00, 0xFF]), // violet
    (0.25, [0x00, 0x80, 0xFF]), // blue
    (0.50, [0x00, 0xC0, 0x00]), // green
    (0.75, [0xFF, 0x80, 0x00]), // orange
    (1.00, [0xFF, 0xFF, 0x00]), // yellow
];

/// Maps `v` in `[0, 1]` (clamped) onto the ramp.
pub fn ramp_color(v: f64) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    for window in COLOR_RAMP.windows(2) {
        let (lo, lo_color) = window[0];
        let (hi, hi_color) = window[1];
        if v <= hi {
            let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let mut out = [0u8; 3];
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = (lo_color[i] as f64 + frac * (hi_color[i] as f64 - lo_color[i] as f64))
                    .round() as u8;
            }
            return out;
        }
    }
    COLOR_RAMP[COLOR_RAMP.len() - 1].1
}

pub fn color_hex(rgb: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb[0], rgb[1], rgb[2])
}

const WIDTH: f64 = 1440.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 24.0;

/// Renders one window as dotted samples, each dot colored by its overlay
/// value. The document also carries a small color-bar legend.
pub fn render_signal_overlay(samples: &[f64], overlay: &[f64], title: &str) -> String {
    assert_eq!(samples.len(), overlay.len());
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if max - min < 1e-12 { 1.0 } else { max - min };
    let x_of = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (samples.len() - 1) as f64;
    let y_of = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - min) / span;

    let mut svg = String::with_capacity(samples.len() * 64);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"16\" font-family=\"monospace\" font-size=\"12\">{}</text>\n",
        xml_escape(title)
    ));
    // baseline
    svg.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#dddddd\"/>\n",
        y_of(0.0f64.clamp(min, max)),
        WIDTH - MARGIN
    ));
    for (i, (s, o)) in samples.iter().zip(overlay).enumerate() {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"{}\"/>\n",
            x_of(i),
            y_of(*s),
            color_hex(ramp_color(*o))
        ));
    }
    // legend: the ramp itself
    for i in 0..100 {
        let v = i as f64 / 99.0;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"4\" width=\"2\" height=\"8\" fill=\"{}\"/>\n",
            WIDTH - MARGIN - 200.0 + 2.0 * i as f64,
            color_hex(ramp_color(v))
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_are_pinned() {
        assert_eq!(ramp_color(0.0), [0x7F, 0x00, 0xFF]);
        assert_eq!(ramp_color(1.0), [0xFF, 0xFF, 0x00]);
        assert_eq!(color_hex(ramp_color(1.0)), "#ffff00");
        // clamping
        assert_eq!(ramp_color(-1.0), ramp_color(0.0));
        assert_eq!(ramp_color(2.0), ramp_color(1.0));
    }

    #[test]
    fn ramp_is_monotone_toward_yellow_in_red_channel() {
        let mut prev = ramp_color(0.0)[0] as i32;
        for i in 1..=20 {
            let c = ramp_color(i as f64 / 20.0)[0] as i32;
            // red rises over the second half of the ramp
            if i > 10 {
                assert!(c >= prev - 1);
            }
            prev = c;
        }
    }

    #[test]
    fn argmax_dot_is_yellow() {
        let samples: Vec<f64> = (0..720).map(|i| (i as f64 * 0.02).sin()).collect();
        let mut overlay = vec![0.2; 720];
        overlay[333] = 1.0;
        let svg = render_signal_overlay(&samples, &overlay, "test");
        assert!(svg.contains("fill=\"#ffff00\""));
        let dot_count = svg.matches("<circle").count();
        assert_eq!(dot_count, 720);
    }
}

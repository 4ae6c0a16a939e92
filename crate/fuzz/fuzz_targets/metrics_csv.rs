#![no_main]

use libfuzzer_sys::fuzz_target;
use randhorizon::plot::{curve_svg, CurveKind};
use randhorizon::trainer::RunMetrics;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(metrics) = RunMetrics::from_csv(text) {
        let _ = curve_svg(&metrics, CurveKind::NegativeReturn);
        let _ = curve_svg(&metrics, CurveKind::EffectiveLr);
    }
});

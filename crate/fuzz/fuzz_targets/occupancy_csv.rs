#![no_main]

use libfuzzer_sys::fuzz_target;
use randhorizon::plot::{occupancy_svg, OccupancyTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = OccupancyTable::from_csv(text) {
        assert_eq!(table.counts.len(), table.rows * table.cols);
        let _ = occupancy_svg(&table);
    }
});

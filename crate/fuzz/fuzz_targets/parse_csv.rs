#![no_main]

use libfuzzer_sys::fuzz_target;
use simam::io::{parse_csv, read_series, read_window};

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_csv(data) {
        assert!(table.data.iter().all(|v| v.is_finite()));
    }
    if let Ok(x) = read_series(data) {
        assert!(x.transitions() >= 2);
    }
    let _ = read_window(data);
});

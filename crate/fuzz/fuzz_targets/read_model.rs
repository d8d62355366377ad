#![no_main]

use libfuzzer_sys::fuzz_target;
use simam::io::{read_model, write_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = read_model(text) {
        // anything accepted must survive a round trip
        let again = read_model(&write_model(&model).unwrap()).unwrap();
        assert_eq!(again, model);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use servqual::ahp::Selection;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = Selection::parse(s);
    }
});

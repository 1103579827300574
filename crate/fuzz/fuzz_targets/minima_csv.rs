#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable_io::minima::{read_minima, write_minima};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_minima(data) {
        let mut out = Vec::new();
        write_minima(&mut out, &rows).expect("write to memory");
        let rows2 = read_minima(out.as_slice()).expect("written table must parse");
        assert_eq!(rows, rows2);
    }
});

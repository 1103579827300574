#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable_io::samples::{read_samples, write_samples};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_samples(data) {
        let mut out = Vec::new();
        write_samples(&mut out, &t).expect("write to memory");
        assert_eq!(
            read_samples(out.as_slice()).expect("written table must parse"),
            t
        );
    }
});

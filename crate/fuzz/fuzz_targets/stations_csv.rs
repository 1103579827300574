#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable_io::stations::{read_points, read_stations, write_stations};

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = read_stations(data) {
        let mut out = Vec::new();
        write_stations(&mut out, &t).expect("write to memory");
        let t2 = read_stations(out.as_slice()).expect("written table must parse");
        assert_eq!(t.ids, t2.ids);
        assert_eq!(t.coords, t2.coords);
        assert_eq!(t.covariates, t2.covariates);
    }
    let _ = read_points(data);
});

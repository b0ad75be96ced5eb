#![no_main]

use libfuzzer_sys::fuzz_target;
use resflow::PwlFunction;

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = PwlFunction::from_json_slice(data) {
        if f.dim() <= 16 {
            let x = vec![0.25 * f.grid().cell_size(); f.dim()];
            let y = f.eval(&x).unwrap();
            assert_eq!(y.len(), f.output_dim());
        }
        let _ = PwlFunction::from_json_str(&f.to_json()).unwrap();
    }
});

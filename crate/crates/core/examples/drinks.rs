//! Learns the bundled vending machine and prints the result.

use efsm_infer::bundled::{drinks, drinks_config};
use efsm_infer::learner::ehw_infer;
use efsm_infer::sul::SulSession;

fn main() {
    let mut sul = SulSession::open(drinks(), None).expect("bundled machine is clean");
    let t0 = std::time::Instant::now();
    match ehw_infer(&mut sul, &drinks_config()) {
        Ok(l) => {
            if std::env::var_os("SHOW_LOG").is_some() {
                print!("{}", l.log.to_ldjson());
            }
            println!("{}", l.model);
            println!("{}", serde_json::to_string_pretty(&l.stats).unwrap());
            println!("elapsed {:?}", t0.elapsed());
        }
        Err(f) => {
            if std::env::var_os("SHOW_LOG").is_some() {
                print!("{}", f.log.to_ldjson());
            }
            eprintln!("failed: {f}");
        }
    }
}

//! Window occupancy, trial rates and the double-pair estimate of the default source.

use ekert::source::{double_pair_poisson_estimate, throughput, window_statistics, SourceParams};

fn main() {
    let p = SourceParams::default();
    let w = window_statistics(&p);
    let t = throughput(&p);
    println!("mean pairs per window {:.4}", p.mean_pairs());
    println!("P(at least one) {:.4}", w.p_at_least_one);
    println!("max rate {:.2} Hz  usable rate {:.2} Hz", t.max_rate, t.usable_rate);
    println!("expected raw key rate {:.3}/s", t.usable_rate / 4.0);
    println!("Poisson double-pair estimate {:.2e}", double_pair_poisson_estimate(&p));
}

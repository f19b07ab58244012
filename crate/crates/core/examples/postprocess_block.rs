//! One post-processing block end to end: LDPC reconciliation, PolyHash
//! verification, decoy estimation and Toeplitz privacy amplification.

use qkd_workbench::linksim::{run_session, ChannelConfig, DetectorModel, SessionOptions, SourceConfig};
use qkd_workbench::postproc::{run_block, BlockAssembler, ProtocolConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let source = SourceConfig::default();
    let channel = ChannelConfig::new(10.0, 0.01);
    let detectors = [DetectorModel::ideal(0.1, 1e-6), DetectorModel::ideal(0.1, 1e-6)];
    let cfg = ProtocolConfig { subblocks_per_block: 3, apriori_qber: 0.015, ..ProtocolConfig::default() };

    let log = run_session(&source, &channel, &detectors, &SessionOptions::new(50, 1))?;
    let mut assembler = BlockAssembler::new(cfg.block_len());
    let blocks = assembler.push(&log);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for block in &blocks {
        let r = run_block(block, &source, &cfg, &mut rng)?;
        println!("block {}: {} sifted bits, code rate {}", r.index, r.l_block, r.code_rate);
        println!("  corrected {} subblocks, verified {} ({} bits), E_mu {:.4}", r.n_cor, r.n_ver, r.l_ver, r.e_mu);
        if let Some(e) = &r.estimation {
            println!("  m1 >= {:.0} (true {:?}), E1 <= {:.4} (true {:?})", e.m1_lower, r.true_m1, e.e1_upper, r.true_e1);
        }
        println!("  leak {:.0} bits, secret length {}, epsilon {:.3e}", r.leak, r.ell_sec, r.budget.eps);
        match &r.abort {
            Some(reason) => println!("  aborted: {reason}"),
            None => println!("  keys agree: {}", r.alice_secret == r.bob_secret),
        }
    }
    println!("{} sifted bits wait for the next block", assembler.pending_len());
    Ok(())
}

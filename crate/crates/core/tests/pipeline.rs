//! The post-processing chain composed by hand from the public API, without
//! the session layer.

mod common;

use cvqkd::bits::BitString;
use cvqkd::crypto::confirm::{confirm, tag_bits, ConfirmSeed};
use cvqkd::crypto::pa::{privacy_amplify, seed_len};
use cvqkd::crypto::rng::RandomnessService;
use cvqkd::discretize::{bin_sifted, join, split, BinningSpec};
use cvqkd::finitekey::{choose_estimation_set, estimate_distance, secret_key_length, theoretical_threshold, KeyLengthModel};
use cvqkd::reconcile::{reconcile_blocks, select_params, LeakageLedger, DEFAULT_MARGIN};
use cvqkd::session::base_spec;
use cvqkd::simulator::{draw_samples, sift, CovarianceModel};

#[test]
fn samples_to_shared_key() {
    let (book, _) = common::small_codebook();
    let model = CovarianceModel::default_point();
    let base = base_spec(BinningSpec::DEFAULT_ALPHA, BinningSpec::DEFAULT_D);
    let (a, b) = draw_samples(&model, 120_000, 5, 6).unwrap();
    let s = sift(&a, &b).unwrap();
    let xa = bin_sifted(&s.alice, &s.bases, &base, false).unwrap();
    let xb = bin_sifted(&s.bob, &s.bases, &base, true).unwrap();

    let k = 10_000;
    let pe = choose_estimation_set(xa.len(), k, 9).unwrap();
    let pe_a: Vec<u16> = pe.iter().map(|&i| xa[i]).collect();
    let pe_b: Vec<u16> = pe.iter().map(|&i| xb[i]).collect();
    let d_pe0 = theoretical_threshold(&model.effective().unwrap(), &base, 0.03);
    let est = estimate_distance(&pe_a, &pe_b, d_pe0).unwrap();
    assert!(est.passed, "{est:?}");

    let mut keep = vec![true; xa.len()];
    pe.iter().for_each(|&i| keep[i] = false);
    let raw_a: Vec<u16> = xa.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
    let raw_b: Vec<u16> = xb.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect();

    let (params, stats) = select_params(None, &pe_a, &pe_b, &book, &base, DEFAULT_MARGIN).unwrap();
    let spec = params.spec(&base);
    let code = params.code(&book).unwrap();
    let (msb_a, lsb_a) = split(&raw_a, &spec).unwrap();
    let mut ledger = LeakageLedger::new();
    ledger.add_lsb(raw_a.len() as u64 * spec.d1 as u64);
    let out = reconcile_blocks(&msb_a, &raw_b, &lsb_a, code, &stats, &spec, &mut ledger, 100).unwrap();
    let bob_key = join(&out.msb, &lsb_a, &spec).unwrap();

    // Confirm block by block and keep only the matching ones.
    let mut rng = RandomnessService::new(4);
    let t = tag_bits(2f64.powi(-32), out.block_ok.len()).unwrap();
    let (mut kept_a, mut kept_b) = (Vec::new(), Vec::new());
    let ranges: Vec<_> = (0..out.layout.blocks).map(|i| out.layout.block(i)).chain([out.layout.tail_range()]).collect();
    for r in ranges.into_iter().filter(|r| !r.is_empty()) {
        let seed = ConfirmSeed::new(rng.next_u64("confirm"), rng.next_u64("confirm") | 1).unwrap();
        let (ok, bits) = confirm(&raw_a[r.clone()], &bob_key[r.clone()], &seed, t).unwrap();
        ledger.add_confirmation(bits as u64);
        if ok {
            kept_a.extend_from_slice(&raw_a[r.clone()]);
            kept_b.extend_from_slice(&bob_key[r]);
        }
    }
    assert_eq!(kept_a, kept_b);
    assert!(kept_a.len() * 10 >= raw_a.len() * 9);

    let model = KeyLengthModel::stub(2e-10, &base, 3.0);
    let report = secret_key_length(kept_a.len(), k, &base, &model, d_pe0, ledger.total()).unwrap();
    assert!(report.length > 0, "{report:?}");
    let input_a = BitString::from_symbols(&kept_a, base.d);
    let input_b = BitString::from_symbols(&kept_b, base.d);
    let seed = rng.random_bits("pa", seed_len(input_a.len(), report.length as usize));
    let key_a = privacy_amplify(&input_a, report.length, &seed).unwrap();
    let key_b = privacy_amplify(&input_b, report.length, &seed).unwrap();
    assert_eq!(key_a, key_b);
    assert_eq!(key_a.len() as i64, report.length);
}

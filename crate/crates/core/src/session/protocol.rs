//! The two state machines. Message order is fixed:
//!
//! ```text
//! A→B NEGOTIATE   B→A NEGOTIATE
//! A→B BASES       B→A BASES
//! A→B PE_INDICES  A→B PE_SYMBOLS  B→A PE_SYMBOLS
//! A→B RECON_PARAMS  A→B LSB_REVEAL  A→B SYNDROME × (blocks + tail)
//! A→B CONFIRM_SEED  B→A CONFIRM_TAG  A→B CONFIRM_TAG
//! A→B KEYLEN_REPORT  B→A KEYLEN_REPORT
//! A→B PA_SEED
//! ```

use super::channel::{Abort, AbortCode, FinalState, SecureChannel};
use super::transport::Transport;
use super::wire::{pack_bits, unpack_bits, MsgType, Reader, Writer};
use super::{Diagnostics, PartyConfig, PartyOutcome, ProtocolParams, Role, SampleSource, SecretKey};
use crate::bits::BitString;
use crate::crypto::confirm::{confirm_hash, tag_bits, ConfirmSeed};
use crate::crypto::pa::{privacy_amplify, seed_len};
use crate::crypto::rng::RandomnessService;
use crate::discretize::{bin_sifted, join, split, BinningSpec};
use crate::finitekey::{choose_estimation_set, estimate_distance, secret_key_length, KeyLengthReport};
use crate::reconcile::{
    compute_syndromes, conditional_entropy, decode_blocks, measured_efficiency, reveal_lsb, select_params,
    BlockLayout, ChannelStats, LeakageLedger, ReconParams, ReconcileError,
};
use crate::simulator::{calibrate_shot_noise, matching_slots, Basis};

/// Bits charged for publishing Alice's raw-key variance.
const VARIANCE_OVERHEAD_BITS: u64 = 64;

fn internal(e: impl std::fmt::Display) -> Abort {
    Abort::local(AbortCode::Internal, e.to_string())
}

fn malformed(e: impl std::fmt::Display) -> Abort {
    Abort::local(AbortCode::Protocol, format!("malformed message: {e}"))
}

struct Party<'a, T: Transport> {
    cfg: &'a PartyConfig,
    chan: SecureChannel<T>,
    rng: RandomnessService,
    ledger: LeakageLedger,
    report: Option<KeyLengthReport>,
    diag: Diagnostics,
}

pub(super) fn run<T: Transport>(cfg: &PartyConfig, source: &dyn SampleSource, transport: T) -> PartyOutcome {
    let (send, recv) = cfg.channel_keys();
    let mut p = Party {
        cfg,
        chan: SecureChannel::new(transport, send, recv),
        rng: RandomnessService::new(cfg.seed),
        ledger: LeakageLedger::new(),
        report: None,
        diag: Diagnostics::default(),
    };
    let result = match cfg.role {
        Role::Alice => p.alice(source),
        Role::Bob => p.bob(source),
    };
    let result = result.map_err(|a| p.chan.abort(a));
    let mut transcript = p.chan.into_transcript();
    transcript.state = match &result {
        Ok(_) => FinalState::Completed,
        Err(a) => FinalState::Aborted(a.clone()),
    };
    PartyOutcome {
        role: cfg.role,
        result,
        transcript,
        ledger: p.ledger,
        key_report: p.report,
        diagnostics: p.diag,
    }
}

/// What both parties hold after sifting and discretization.
struct Sifted {
    symbols: Vec<u16>,
}

impl<T: Transport> Party<'_, T> {
    fn params(&self) -> &ProtocolParams {
        &self.cfg.params
    }

    fn negotiate(&mut self) -> Result<[u8; 16], Abort> {
        let mine = self.params().encode();
        let check = |payload: &[u8]| -> Result<(ProtocolParams, [u8; 16]), Abort> {
            let mut r = Reader::new(payload);
            let p = ProtocolParams::decode(&mut r).map_err(|e| Abort::local(AbortCode::Negotiation, e.to_string()))?;
            let sid: [u8; 16] = r.take(16, "session id").map_err(malformed)?.try_into().unwrap();
            r.done().map_err(malformed)?;
            Ok((p, sid))
        };
        let sid = match self.cfg.role {
            Role::Alice => {
                let mut sid = [0u8; 16];
                self.rng.fill_bytes("session/id", &mut sid);
                self.chan.send(MsgType::Negotiate, &[mine.as_slice(), &sid].concat())?;
                let (theirs, echoed) = check(&self.chan.recv(MsgType::Negotiate)?)?;
                if theirs.encode() != mine || echoed != sid {
                    return Err(Abort::local(AbortCode::Negotiation, "parameter mismatch"));
                }
                sid
            }
            Role::Bob => {
                let (theirs, sid) = check(&self.chan.recv(MsgType::Negotiate)?)?;
                self.chan.send(MsgType::Negotiate, &[mine.as_slice(), &sid].concat())?;
                if theirs.encode() != mine {
                    return Err(Abort::local(AbortCode::Negotiation, "parameter mismatch"));
                }
                sid
            }
        };
        if self.params().k == 0 {
            return Err(Abort::local(AbortCode::Negotiation, "estimation size k must be positive"));
        }
        Ok(sid)
    }

    /// Measurement, basis exchange, sifting and binning.
    fn acquire(&mut self, source: &dyn SampleSource) -> Result<Sifted, Abort> {
        let slots = self.params().slots;
        let role = self.cfg.role;
        let mut rec = source.measure(role, slots).map_err(internal)?;
        if role == Role::Alice {
            let vac = source.vacuum(role, self.cfg.calibration_samples).map_err(internal)?;
            let factor = calibrate_shot_noise(&vac).map_err(internal)?;
            rec.scale(factor);
            self.diag.calibration_factor = Some(factor);
        }
        self.diag.slots = slots;

        let mine = pack_bits(rec.bases.iter().map(|b| b.bit()));
        let theirs = match role {
            Role::Alice => {
                self.chan.send(MsgType::Bases, &mine)?;
                self.chan.recv(MsgType::Bases)?
            }
            Role::Bob => {
                let t = self.chan.recv(MsgType::Bases)?;
                self.chan.send(MsgType::Bases, &mine)?;
                t
            }
        };
        let theirs: Vec<Basis> = unpack_bits(&theirs, slots)
            .map_err(|_| Abort::local(AbortCode::Protocol, "basis length mismatch"))?
            .into_iter()
            .map(Basis::from_bit)
            .collect();
        let kept = matching_slots(&rec.bases, &theirs).map_err(internal)?;
        if kept.is_empty() {
            return Err(Abort::local(AbortCode::EmptySift, "empty sift"));
        }
        self.diag.sifted = kept.len();
        let values: Vec<f64> = kept.iter().map(|&i| rec.values[i]).collect();
        let bases: Vec<Basis> = kept.iter().map(|&i| rec.bases[i]).collect();
        let symbols = bin_sifted(&values, &bases, &self.params().spec, role == Role::Bob).map_err(internal)?;
        Ok(Sifted { symbols })
    }

    fn recv_symbols(&mut self, ty: MsgType, expected: usize) -> Result<Vec<u16>, Abort> {
        let p = self.chan.recv(ty)?;
        let mut r = Reader::new(&p);
        let count = r.u32("count").map_err(malformed)? as usize;
        if count != expected {
            return Err(Abort::local(AbortCode::Protocol, format!("{ty:?}: {count} symbols, expected {expected}")));
        }
        let s = r.u16s(count, "symbols").map_err(malformed)?;
        r.done().map_err(malformed)?;
        Ok(s)
    }

    fn send_symbols(&mut self, ty: MsgType, s: &[u16]) -> Result<(), Abort> {
        let p = Writer::new().u32(s.len() as u32).u16s(s).finish();
        self.chan.send(ty, &p)
    }

    /// Removes the estimation set, returning the raw key.
    fn raw_key(symbols: &[u16], pe_idx: &[usize]) -> Vec<u16> {
        let mut out = Vec::with_capacity(symbols.len() - pe_idx.len());
        let mut it = pe_idx.iter().peekable();
        for (i, &s) in symbols.iter().enumerate() {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(s);
            }
        }
        out
    }

    fn estimate(&mut self, a: &[u16], b: &[u16]) -> Result<bool, Abort> {
        let est = estimate_distance(a, b, self.params().d_pe0).map_err(internal)?;
        self.diag.estimation = Some(est);
        self.ledger.add_pe_symbols(2 * est.k as u64);
        Ok(est.passed)
    }

    fn record_stats(&mut self, params: &ReconParams, stats: &ChannelStats, pe_a: &[u16], pe_b: &[u16]) {
        let spec = self.params().spec;
        self.diag.recon = Some(*params);
        self.diag.stats = Some(*stats);
        self.diag.h_cond = Some(conditional_entropy(pe_a, pe_b, stats, &spec));
    }

    fn encode_recon(p: &ReconParams, s: &ChannelStats) -> Vec<u8> {
        Writer::new()
            .u8(p.d1 as u8)
            .u8(p.d2 as u8)
            .u16(p.rate_percent)
            .u32(p.n as u32)
            .u32(p.n_checks as u32)
            .f64(p.h_msb)
            .f64(p.leak_per_symbol)
            .f64(s.mean_a)
            .f64(s.mean_b)
            .f64(s.var_a)
            .f64(s.var_b)
            .f64(s.cov)
            .finish()
    }

    fn decode_recon(payload: &[u8]) -> Result<(ReconParams, ChannelStats), Abort> {
        let mut r = Reader::new(payload);
        let mut f = || -> Result<(ReconParams, ChannelStats), super::wire::WireError> {
            let p = ReconParams {
                d1: r.u8("d1")? as u32,
                d2: r.u8("d2")? as u32,
                rate_percent: r.u16("rate")?,
                n: r.u32("n")? as usize,
                n_checks: r.u32("n_checks")? as usize,
                h_msb: r.f64("h_msb")?,
                leak_per_symbol: r.f64("leak")?,
            };
            let s = ChannelStats {
                mean_a: r.f64("mean_a")?,
                mean_b: r.f64("mean_b")?,
                var_a: r.f64("var_a")?,
                var_b: r.f64("var_b")?,
                cov: r.f64("cov")?,
            };
            r.done()?;
            Ok((p, s))
        };
        f().map_err(malformed)
    }

    fn confirm_count(layout: &BlockLayout) -> usize {
        layout.blocks + usize::from(layout.tail > 0)
    }

    fn confirm_range(layout: &BlockLayout, b: usize) -> std::ops::Range<usize> {
        if b < layout.blocks {
            layout.block(b)
        } else {
            layout.tail_range()
        }
    }

    fn send_tags(&mut self, tags: &[u64]) -> Result<(), Abort> {
        let mut w = Writer::new();
        w.u32(tags.len() as u32);
        tags.iter().for_each(|&t| {
            w.u64(t);
        });
        self.chan.send(MsgType::ConfirmTag, &w.finish())
    }

    fn recv_tags(&mut self, expected: usize) -> Result<Vec<u64>, Abort> {
        let p = self.chan.recv(MsgType::ConfirmTag)?;
        let mut r = Reader::new(&p);
        let count = r.u32("count").map_err(malformed)? as usize;
        if count != expected {
            return Err(Abort::local(AbortCode::Protocol, "confirmation tag count mismatch"));
        }
        let tags = (0..count).map(|_| r.u64("tag")).collect::<Result<Vec<_>, _>>().map_err(malformed)?;
        r.done().map_err(malformed)?;
        Ok(tags)
    }

    /// Keeps confirmed blocks and records what was disclosed.
    fn keep_confirmed(&mut self, key: &[u16], layout: &BlockLayout, mine: &[u64], theirs: &[u64], t: u32) -> Result<Vec<u16>, Abort> {
        self.ledger.add_confirmation(t as u64 * mine.len() as u64);
        let mut kept = Vec::with_capacity(key.len());
        for b in 0..mine.len() {
            if mine[b] == theirs[b] {
                kept.extend_from_slice(&key[Self::confirm_range(layout, b)]);
            } else {
                self.diag.confirm_failures += 1;
            }
        }
        self.diag.confirmed_symbols = kept.len();
        if kept.is_empty() {
            return Err(Abort::local(AbortCode::NoConfirmedBlocks, "no block passed confirmation"));
        }
        Ok(kept)
    }

    /// Computes ℓ and cross-checks it with the peer.
    fn key_length(&mut self, n_kept: usize) -> Result<i64, Abort> {
        let spec = self.params().spec;
        let model = self.params().key_model;
        let (k, d_pe0) = (self.params().k, self.params().d_pe0);
        let leak = self.ledger.total();
        let rep = secret_key_length(n_kept, k, &spec, &model, d_pe0, leak).map_err(internal)?;
        let ell = rep.length;
        self.report = Some(rep);
        let mine = Writer::new().i64(ell).u64(n_kept as u64).u64(leak).finish();
        let theirs = match self.cfg.role {
            Role::Alice => {
                self.chan.send(MsgType::KeylenReport, &mine)?;
                self.chan.recv(MsgType::KeylenReport)?
            }
            Role::Bob => {
                let t = self.chan.recv(MsgType::KeylenReport)?;
                self.chan.send(MsgType::KeylenReport, &mine)?;
                t
            }
        };
        if theirs != mine {
            return Err(Abort::local(AbortCode::KeyReportMismatch, "key length reports differ"));
        }
        if ell <= 0 {
            return Err(Abort::local(AbortCode::KeyLength, format!("non-positive key length {ell}")));
        }
        Ok(ell)
    }

    fn finish_beta(&mut self, n_raw: usize) {
        if let Some(h) = self.diag.h_cond {
            self.diag.beta = measured_efficiency(&self.ledger, h, n_raw);
        }
    }

    fn alice(&mut self, source: &dyn SampleSource) -> Result<SecretKey, Abort> {
        let sid = self.negotiate()?;
        let sifted = self.acquire(source)?;
        let n = sifted.symbols.len();
        let k = self.params().k;
        self.diag.k = k;
        if k >= n {
            return Err(Abort::local(AbortCode::ParameterEstimation, format!("k = {k} not below sifted count {n}")));
        }

        // Estimation.
        let pe_seed = self.rng.next_u64("pe/seed");
        let pe_idx = choose_estimation_set(n, k, pe_seed).map_err(internal)?;
        let mut w = Writer::new();
        w.u32(k as u32);
        pe_idx.iter().for_each(|&i| {
            w.u32(i as u32);
        });
        self.chan.send(MsgType::PeIndices, &w.finish())?;
        let pe_a: Vec<u16> = pe_idx.iter().map(|&i| sifted.symbols[i]).collect();
        self.send_symbols(MsgType::PeSymbols, &pe_a)?;
        let pe_b = self.recv_symbols(MsgType::PeSymbols, k)?;
        if !self.estimate(&pe_a, &pe_b)? {
            return Err(Abort::local(AbortCode::ParameterEstimation, "d_pe exceeds threshold"));
        }

        // Reconciliation.
        let raw = Self::raw_key(&sifted.symbols, &pe_idx);
        let m = raw.len() as f64;
        let mean = raw.iter().map(|&s| s as f64).sum::<f64>() / m;
        let var_a = raw.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let base = self.params().spec;
        let (params, stats) =
            match select_params(Some(var_a), &pe_a, &pe_b, &self.cfg.codebook, &base, self.params().recon_margin) {
                Ok(x) => x,
                Err(ReconcileError::ChannelTooNoisy) => {
                    return Err(Abort::local(AbortCode::ChannelTooNoisy, "channel too noisy"))
                }
                Err(e) => return Err(internal(e)),
            };
        self.record_stats(&params, &stats, &pe_a, &pe_b);
        self.chan.send(MsgType::ReconParams, &Self::encode_recon(&params, &stats))?;
        self.ledger.add_overhead(VARIANCE_OVERHEAD_BITS);

        let spec = params.spec(&base);
        let code = params.code(&self.cfg.codebook).map_err(internal)?;
        let (msb, lsb) = split(&raw, &spec).map_err(internal)?;
        let revealed = reveal_lsb(&lsb, spec.d1, &mut self.ledger);
        self.send_symbols(MsgType::LsbReveal, &revealed)?;

        let layout = BlockLayout::new(raw.len(), code.n());
        self.diag.blocks = layout.blocks;
        self.diag.tail = layout.tail;
        let syndromes = compute_syndromes(&msb, code).map_err(internal)?;
        let d2 = spec.d2() as u64;
        for (b, s) in syndromes.iter().enumerate() {
            let sym: Vec<u16> = s.iter().map(|&x| x as u16).collect();
            let p = Writer::new().u32(b as u32).u8(0).u32(sym.len() as u32).u16s(&sym).finish();
            self.chan.send(MsgType::Syndrome, &p)?;
            self.ledger.add_syndrome(sym.len() as u64 * d2);
        }
        if layout.tail > 0 {
            let sym: Vec<u16> = msb[layout.tail_range()].iter().map(|&x| x as u16).collect();
            let p = Writer::new().u32(layout.blocks as u32).u8(1).u32(sym.len() as u32).u16s(&sym).finish();
            self.chan.send(MsgType::Syndrome, &p)?;
            self.ledger.add_tail(sym.len() as u64 * d2);
        }

        // Confirmation.
        let blocks = Self::confirm_count(&layout);
        let t = tag_bits(self.params().epsilon_c, blocks).map_err(internal)?;
        let mut w = Writer::new();
        w.u32(blocks as u32).u8(t as u8);
        let mut seeds = Vec::with_capacity(blocks);
        for _ in 0..blocks {
            let r = self.rng.next_u64("confirm/seed");
            let a = loop {
                let a = self.rng.next_u64("confirm/seed");
                if a != 0 {
                    break a;
                }
            };
            let s = ConfirmSeed::new(r, a).map_err(internal)?;
            w.bytes(&s.to_bytes());
            seeds.push(s);
        }
        self.chan.send(MsgType::ConfirmSeed, &w.finish())?;
        let mine = (0..blocks)
            .map(|b| confirm_hash(&seeds[b], &raw[Self::confirm_range(&layout, b)], t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(internal)?;
        let theirs = self.recv_tags(blocks)?;
        self.send_tags(&mine)?;
        let kept = self.keep_confirmed(&raw, &layout, &mine, &theirs, t)?;
        self.finish_beta(raw.len());

        // Key length and privacy amplification.
        let ell = self.key_length(kept.len())?;
        let input = BitString::from_symbols(&kept, base.d);
        let seed = self.rng.random_bits("pa/seed", seed_len(input.len(), ell as usize));
        let p = Writer::new().u64(seed.len() as u64).bytes(&seed.to_bytes()).finish();
        self.chan.send(MsgType::PaSeed, &p)?;
        let bits = privacy_amplify(&input, ell, &seed).map_err(internal)?;
        Ok(SecretKey {
            bits,
            epsilon: self.params().key_model.epsilon,
            session_id: sid,
            transcript_sha256: self.chan.transcript.digest(),
        })
    }

    fn bob(&mut self, source: &dyn SampleSource) -> Result<SecretKey, Abort> {
        let sid = self.negotiate()?;
        let sifted = self.acquire(source)?;
        let n = sifted.symbols.len();
        let k = self.params().k;
        self.diag.k = k;

        // Estimation.
        let p = self.chan.recv(MsgType::PeIndices)?;
        let mut r = Reader::new(&p);
        let count = r.u32("count").map_err(malformed)? as usize;
        if count != k {
            return Err(Abort::local(AbortCode::Protocol, format!("estimation set of {count}, expected {k}")));
        }
        let pe_idx = (0..count).map(|_| r.u32("index").map(|i| i as usize)).collect::<Result<Vec<_>, _>>().map_err(malformed)?;
        r.done().map_err(malformed)?;
        if pe_idx.windows(2).any(|w| w[0] >= w[1]) || pe_idx.last().is_some_and(|&i| i >= n) || k >= n {
            return Err(Abort::local(AbortCode::Protocol, "invalid estimation indices"));
        }
        let pe_a = self.recv_symbols(MsgType::PeSymbols, k)?;
        let pe_b: Vec<u16> = pe_idx.iter().map(|&i| sifted.symbols[i]).collect();
        if !self.estimate(&pe_a, &pe_b)? {
            return Err(Abort::local(AbortCode::ParameterEstimation, "d_pe exceeds threshold"));
        }
        self.send_symbols(MsgType::PeSymbols, &pe_b)?;

        // Reconciliation.
        let raw = Self::raw_key(&sifted.symbols, &pe_idx);
        let (params, stats) = Self::decode_recon(&self.chan.recv(MsgType::ReconParams)?)?;
        self.ledger.add_overhead(VARIANCE_OVERHEAD_BITS);
        let base = self.params().spec;
        if params.d1 + params.d2 != base.d || stats.validate().is_err() {
            return Err(Abort::local(AbortCode::Protocol, "inconsistent reconciliation parameters"));
        }
        let code = params
            .code(&self.cfg.codebook)
            .map_err(|e| Abort::local(AbortCode::Protocol, e.to_string()))?;
        if code.n() != params.n || code.n_checks() != params.n_checks {
            return Err(Abort::local(AbortCode::Protocol, "code dimensions differ"));
        }
        self.record_stats(&params, &stats, &pe_a, &pe_b);
        let spec: BinningSpec = params.spec(&base);
        let lsb_count = if spec.d1 == 0 { 0 } else { raw.len() };
        let lsb_a = self.recv_symbols(MsgType::LsbReveal, lsb_count)?;
        if lsb_a.iter().any(|&l| (l as u32) >> spec.d1 != 0) {
            return Err(Abort::local(AbortCode::Protocol, "revealed bits out of range"));
        }
        self.ledger.add_lsb(lsb_a.len() as u64 * spec.d1 as u64);

        let layout = BlockLayout::new(raw.len(), code.n());
        self.diag.blocks = layout.blocks;
        self.diag.tail = layout.tail;
        let d2 = spec.d2() as u64;
        let q = 1u32 << spec.d2();
        let mut syndromes = Vec::with_capacity(layout.blocks);
        let mut tail = Vec::new();
        for b in 0..Self::confirm_count(&layout) {
            let p = self.chan.recv(MsgType::Syndrome)?;
            let mut r = Reader::new(&p);
            let idx = r.u32("block").map_err(malformed)? as usize;
            let kind = r.u8("kind").map_err(malformed)?;
            let count = r.u32("count").map_err(malformed)? as usize;
            let (want_kind, want_count) = if b < layout.blocks { (0, code.n_checks()) } else { (1, layout.tail) };
            if idx != b || kind != want_kind || count != want_count {
                return Err(Abort::local(AbortCode::Protocol, format!("unexpected syndrome message for block {b}")));
            }
            let sym = r.u16s(count, "syndrome").map_err(malformed)?;
            r.done().map_err(malformed)?;
            if sym.iter().any(|&s| s as u32 >= q) {
                return Err(Abort::local(AbortCode::Protocol, "syndrome symbol out of range"));
            }
            let sym: Vec<u8> = sym.into_iter().map(|s| s as u8).collect();
            if kind == 0 {
                self.ledger.add_syndrome(count as u64 * d2);
                syndromes.push(sym);
            } else {
                self.ledger.add_tail(count as u64 * d2);
                tail = sym;
            }
        }
        let full = layout.blocks * layout.n;
        let lsb_full = if spec.d1 == 0 { &[][..] } else { &lsb_a[..full] };
        let results = decode_blocks(&raw[..full], lsb_full, &syndromes, code, &stats, &spec, self.params().max_iters)
            .map_err(internal)?;
        let mut msb = Vec::with_capacity(raw.len());
        let mut iters = 0usize;
        let mut failures = 0usize;
        for r in &results {
            msb.extend_from_slice(&r.estimate);
            iters += r.iterations;
            failures += usize::from(!r.syndrome_matched);
        }
        msb.extend_from_slice(&tail);
        self.diag.decode_failures = Some(failures);
        if !results.is_empty() {
            self.diag.mean_iterations = Some(iters as f64 / results.len() as f64);
        }
        let corrected = join(&msb, &lsb_a, &spec).map_err(internal)?;

        // Confirmation.
        let blocks = Self::confirm_count(&layout);
        let p = self.chan.recv(MsgType::ConfirmSeed)?;
        let mut r = Reader::new(&p);
        let count = r.u32("count").map_err(malformed)? as usize;
        let t = r.u8("t").map_err(malformed)? as u32;
        let expected_t = tag_bits(self.params().epsilon_c, blocks).map_err(internal)?;
        if count != blocks || t != expected_t {
            return Err(Abort::local(AbortCode::Protocol, "confirmation parameters differ"));
        }
        let seeds = (0..count)
            .map(|_| {
                let b: [u8; 16] = r.take(16, "seed").map_err(malformed)?.try_into().unwrap();
                ConfirmSeed::from_bytes(&b).map_err(malformed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        r.done().map_err(malformed)?;
        let mine = (0..blocks)
            .map(|b| confirm_hash(&seeds[b], &corrected[Self::confirm_range(&layout, b)], t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(internal)?;
        self.send_tags(&mine)?;
        let theirs = self.recv_tags(blocks)?;
        let kept = self.keep_confirmed(&corrected, &layout, &mine, &theirs, t)?;
        self.finish_beta(raw.len());

        // Key length and privacy amplification.
        let ell = self.key_length(kept.len())?;
        let input = BitString::from_symbols(&kept, base.d);
        let p = self.chan.recv(MsgType::PaSeed)?;
        let mut r = Reader::new(&p);
        let len = r.u64("seed length").map_err(malformed)? as usize;
        if len != seed_len(input.len(), ell as usize) {
            return Err(Abort::local(AbortCode::Protocol, "privacy amplification seed has wrong length"));
        }
        let bytes = r.take(len.div_ceil(8), "seed").map_err(malformed)?;
        r.done().map_err(malformed)?;
        let seed = BitString::from_bytes(bytes, len);
        let bits = privacy_amplify(&input, ell, &seed).map_err(internal)?;
        Ok(SecretKey {
            bits,
            epsilon: self.params().key_model.epsilon,
            session_id: sid,
            transcript_sha256: self.chan.transcript.digest(),
        })
    }
}

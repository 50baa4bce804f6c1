//! Random acquire/renew/release/mutate/charge interleavings on one file
//! lock, driven by a virtual clock.

use docmine_core::lock::{FileLock, UserId};
use docmine_core::time::{Duration, Timestamp};
use docmine_core::CoreError;
use rand::Rng as _;

use super::Rng;

const USERS: [&str; 3] = ["ana", "ben", "cho"];

#[derive(Debug, Clone)]
pub enum LockOp {
    Acquire(usize, i64),
    Renew(usize),
    Release(usize),
    Mutate(usize),
    TakeCharge(usize),
    ReleaseCharge(usize),
    Advance(i64),
}

pub fn random_op(rng: &mut Rng) -> LockOp {
    let u = rng.random_range(0..USERS.len());
    match rng.random_range(0..9) {
        0 | 1 => LockOp::Acquire(u, [1_000, 4_000, 10_000][rng.random_range(0..3)]),
        2 => LockOp::Renew(u),
        3 => LockOp::Release(u),
        4 => LockOp::Mutate(u),
        5 => LockOp::TakeCharge(u),
        6 => LockOp::ReleaseCharge(u),
        _ => LockOp::Advance(rng.random_range(0..3_000)),
    }
}

/// What the tester knows about the active lease before an operation.
#[derive(Debug, Clone)]
struct Seen {
    holder: Option<(UserId, Timestamp, Duration, Timestamp)>,
}

fn observe(lock: &FileLock, now: Timestamp) -> Seen {
    Seen { holder: lock.active_lease(now).map(|l| (l.holder.clone(), l.expires_at, l.duration, l.last_mutation)) }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Tally {
    pub steps: usize,
    pub evictions: usize,
    pub refused: usize,
    pub expiries: usize,
}

/// Runs `len` random operations; returns counts of the interesting events.
pub fn run(seed: u64, len: usize) -> Result<Tally, String> {
    let mut rng = super::rng(seed);
    let users: Vec<UserId> = USERS.iter().map(|u| UserId::new(*u)).collect();
    let mut lock = FileLock::default();
    let mut now = Timestamp(0);
    let mut tally = Tally::default();
    for _ in 0..len {
        let op = random_op(&mut rng);
        let seen = observe(&lock, now);
        let principal = lock.principal.clone();
        let at = now;
        let ctx = || format!("{op:?} at {at:?} with {seen:?}, principal {principal:?}");
        match &op {
            LockOp::Acquire(u, ms) => {
                let u = &users[*u];
                let res = lock.acquire(u, now, Duration(*ms)).cloned();
                match (&seen.holder, res) {
                    (None, Ok(l)) => {
                        if l.holder != *u || l.expires_at != now.plus(Duration(*ms)) {
                            return Err(format!("fresh lease wrong: {}", ctx()));
                        }
                    }
                    (None, Err(e)) => return Err(format!("free lock refused ({e}): {}", ctx())),
                    (Some((h, ..)), Ok(l)) if h == u => {
                        if l.expires_at != now.plus(Duration(*ms)) {
                            return Err(format!("re-acquire did not extend: {}", ctx()));
                        }
                    }
                    (Some((h, _, dur, last)), Ok(_)) => {
                        let idle = now.since(*last) >= dur.half();
                        if principal.as_ref() != Some(u) || !idle {
                            return Err(format!("{u} evicted {h} without the principal idle rule: {}", ctx()));
                        }
                        tally.evictions += 1;
                    }
                    (Some((h, exp, dur, last)), Err(e)) => {
                        let evictable = principal.as_ref() == Some(u) && now.since(*last) >= dur.half();
                        if h == u || evictable {
                            return Err(format!("refused ({e}) although allowed: {}", ctx()));
                        }
                        if e != (CoreError::LockHeld { holder: h.clone(), expires_at: *exp }) {
                            return Err(format!("wrong refusal {e}: {}", ctx()));
                        }
                        tally.refused += 1;
                    }
                }
            }
            LockOp::Renew(u) => {
                let u = &users[*u];
                let res = lock.renew(u, now).map(|l| l.expires_at);
                match (&seen.holder, res) {
                    (Some((h, _, dur, _)), Ok(exp)) if h == u && exp == now.plus(*dur) => {}
                    (Some((h, ..)), Err(_)) if h != u => {}
                    (None, Err(CoreError::NotLocked)) => {}
                    (_, r) => return Err(format!("renew gave {r:?}: {}", ctx())),
                }
            }
            LockOp::Release(u) => {
                let u = &users[*u];
                let res = lock.release(u, now);
                match (&seen.holder, res) {
                    (Some((h, ..)), Err(_)) if h != u => {}
                    (Some((h, ..)), Ok(())) if h == u => {}
                    (None, Ok(())) => {}
                    (_, r) => return Err(format!("release gave {r:?}: {}", ctx())),
                }
                if seen.holder.as_ref().is_none_or(|(h, ..)| h == u) && lock.holder(now).is_some() {
                    return Err(format!("lock still held after release: {}", ctx()));
                }
            }
            LockOp::Mutate(u) => {
                let u = &users[*u];
                let ok = lock.authorize_mutation(u, now).is_ok();
                let holds = seen.holder.as_ref().is_some_and(|(h, ..)| h == u);
                if ok != holds {
                    return Err(format!("mutation authorized={ok} for holder={holds}: {}", ctx()));
                }
                if ok && lock.lease.as_ref().map(|l| l.last_mutation) != Some(now) {
                    return Err(format!("mutation time not recorded: {}", ctx()));
                }
            }
            LockOp::TakeCharge(u) => {
                let u = &users[*u];
                let ok = lock.take_charge(u).is_ok();
                if ok != principal.as_ref().is_none_or(|p| p == u) || (ok && lock.principal.as_ref() != Some(u)) {
                    return Err(format!("take_charge gave {ok}: {}", ctx()));
                }
            }
            LockOp::ReleaseCharge(u) => {
                let u = &users[*u];
                let ok = lock.release_charge(u).is_ok();
                if ok != principal.as_ref().is_none_or(|p| p == u) || (ok && lock.principal.is_some()) {
                    return Err(format!("release_charge gave {ok}: {}", ctx()));
                }
            }
            LockOp::Advance(ms) => {
                now = now.plus(Duration(*ms));
                if seen.holder.is_some() && lock.holder(now).is_none() {
                    tally.expiries += 1;
                }
            }
        }
        // At every instant at most one user may act as the holder.
        for probe in [now, now.plus(Duration(1)), now.plus(Duration(999))] {
            let holders = users.iter().filter(|u| lock.check_holder(u, probe).is_ok()).count();
            if holders > 1 {
                return Err(format!("{holders} holders at {probe:?} after {}", ctx()));
            }
            if holders == 1 && lock.holder(probe).is_none() {
                return Err(format!("holder probe disagrees after {}", ctx()));
            }
        }
        tally.steps += 1;
    }
    Ok(tally)
}

//! Edit leases and the principal ("in charge") mechanism for one file.
//!
//! A lease is active while `now < expires_at`. At most one lease exists per
//! file, so at most one user can be the active holder at any instant. Expired
//! leases are claimable by anyone. The file's principal may additionally evict
//! a lease whose holder has not mutated anything for half the lease duration.

use alloc::string::String;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::time::{Duration, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_LEASE: Duration = Duration::from_mins(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockLease {
    pub holder: UserId,
    pub acquired_at: Timestamp,
    pub expires_at: Timestamp,
    pub duration: Duration,
    /// Last successful mutation (or the acquisition time).
    pub last_mutation: Timestamp,
}

impl LockLease {
    pub fn is_active(&self, now: Timestamp) -> bool {
        now < self.expires_at
    }

    fn is_idle(&self, now: Timestamp) -> bool {
        now.since(self.last_mutation) >= self.duration.half()
    }
}

/// Lock and principal state of a single file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLock {
    pub lease: Option<LockLease>,
    pub principal: Option<UserId>,
}

impl FileLock {
    pub fn active_lease(&self, now: Timestamp) -> Option<&LockLease> {
        self.lease.as_ref().filter(|l| l.is_active(now))
    }

    pub fn holder(&self, now: Timestamp) -> Option<&UserId> {
        self.active_lease(now).map(|l| &l.holder)
    }

    fn held_error(lease: &LockLease) -> CoreError {
        CoreError::LockHeld {
            holder: lease.holder.clone(),
            expires_at: lease.expires_at,
        }
    }

    /// Grants a fresh lease to `user`. Re-acquiring one's own active lease
    /// extends it.
    pub fn acquire(
        &mut self,
        user: &UserId,
        now: Timestamp,
        duration: Duration,
    ) -> Result<&LockLease, CoreError> {
        if let Some(active) = self.active_lease(now) {
            if active.holder == *user {
                let lease = self.lease.as_mut().expect("active lease");
                lease.expires_at = now.plus(duration);
                lease.duration = duration;
                return Ok(lease);
            }
            let evictable = self.principal.as_ref() == Some(user) && active.is_idle(now);
            if !evictable {
                return Err(Self::held_error(active));
            }
        }
        self.lease = Some(LockLease {
            holder: user.clone(),
            acquired_at: now,
            expires_at: now.plus(duration),
            duration,
            last_mutation: now,
        });
        Ok(self.lease.as_ref().expect("just set"))
    }

    pub fn renew(&mut self, user: &UserId, now: Timestamp) -> Result<&LockLease, CoreError> {
        match self.active_lease(now) {
            Some(l) if l.holder == *user => {
                let lease = self.lease.as_mut().expect("active lease");
                lease.expires_at = now.plus(lease.duration);
                Ok(lease)
            }
            Some(l) => Err(Self::held_error(l)),
            None => Err(CoreError::NotLocked),
        }
    }

    /// Releasing when nobody holds the lock is a no-op.
    pub fn release(&mut self, user: &UserId, now: Timestamp) -> Result<(), CoreError> {
        match self.active_lease(now) {
            Some(l) if l.holder != *user => Err(Self::held_error(l)),
            _ => {
                self.lease = None;
                Ok(())
            }
        }
    }

    /// Gate for every mutating document operation. Records the mutation time
    /// used by the principal's idle-eviction rule.
    pub fn authorize_mutation(&mut self, user: &UserId, now: Timestamp) -> Result<(), CoreError> {
        match self.lease.as_mut() {
            Some(l) if l.is_active(now) && l.holder == *user => {
                l.last_mutation = now;
                Ok(())
            }
            _ => Err(CoreError::NotLocked),
        }
    }

    /// Read-only variant of [`FileLock::authorize_mutation`].
    pub fn check_holder(&self, user: &UserId, now: Timestamp) -> Result<(), CoreError> {
        match self.active_lease(now) {
            Some(l) if l.holder == *user => Ok(()),
            _ => Err(CoreError::NotLocked),
        }
    }

    pub fn take_charge(&mut self, user: &UserId) -> Result<(), CoreError> {
        match &self.principal {
            Some(p) if p != user => Err(CoreError::PrincipalHeld(p.clone())),
            _ => {
                self.principal = Some(user.clone());
                Ok(())
            }
        }
    }

    pub fn release_charge(&mut self, user: &UserId) -> Result<(), CoreError> {
        match &self.principal {
            Some(p) if p != user => Err(CoreError::PrincipalHeld(p.clone())),
            _ => {
                self.principal = None;
                Ok(())
            }
        }
    }
}

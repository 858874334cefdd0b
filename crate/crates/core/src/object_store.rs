//! Per-kernel-object local storage with transparent cleanup at the end of
//! the owner's lifecycle.
//!
//! Storage is keyed by the full [`KernelObjectId`], never by `local_id`
//! alone: two inodes sharing an inode number on different file systems get
//! disjoint storages, as do two generations of a recycled id. The storage
//! itself lives in a per-object cell; a handle reaches it directly without
//! going back through the registry, which is what makes the local-storage
//! path cheaper than a map keyed by manually composed identifiers. When an
//! object dies its storage is reclaimed without any caller action; retained
//! handles observe `live = false` from then on.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, Weak};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_model::{KernelObjectId, ObjectKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("object {0} is not live")]
    DeadObject(KernelObjectId),
    #[error("object {0} has no storage")]
    NoStorage(KernelObjectId),
    #[error("no live object matches selector {0}")]
    NoSuchObject(String),
    #[error("selector {0} resolves to more than one live object")]
    AmbiguousSelector(String),
}

/// Storage accounting. `live_count` always equals
/// `created_total - reclaimed_total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageStats {
    pub live_count: u64,
    pub created_total: u64,
    pub reclaimed_total: u64,
}

/// Userspace-style identifier that routes to a live object's storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalId {
    /// A PID; routes to the task's credential object (its `cred` storage).
    Pid(u64),
    /// A PID; routes to the task object itself.
    Task(u64),
    /// An (fs_uuid, inode number) pair; routes to the inode object.
    Inode { fs_uuid: u64, inode: u64 },
}

#[derive(Debug, Default)]
struct CellInner {
    dead: bool,
    slots: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, Default)]
struct StorageCell {
    inner: Mutex<CellInner>,
}

impl StorageCell {
    fn kill(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.dead = true;
        inner.slots = BTreeMap::new(); // memory accounted as released
    }
}

#[derive(Debug, Default)]
struct ObjectSlot {
    live: bool,
    storage: Option<Arc<StorageCell>>,
}

#[derive(Debug, Default)]
struct StoreInner {
    objects: BTreeMap<KernelObjectId, ObjectSlot>,
    stats: StorageStats,
}

/// Registry of simulated kernel objects plus their local storages.
/// Cloning shares the underlying store. Per-object operations serialize on
/// the object's own cell; `end_lifecycle` linearizes against in-flight
/// handle access (access after the end fails, never observes partial
/// state).
#[derive(Debug, Clone, Default)]
pub struct ObjectStore {
    inner: Arc<Mutex<StoreInner>>,
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an object as live. Registering a live object again is a
    /// no-op; registering an id whose lifecycle already ended is an error
    /// (reuse requires a new generation).
    pub fn register(&self, obj: KernelObjectId) -> Result<(), StoreError> {
        let mut inner = self.inner.lock().unwrap();
        match inner.objects.get(&obj) {
            Some(slot) if slot.live => Ok(()),
            Some(_) => Err(StoreError::DeadObject(obj)),
            None => {
                inner.objects.insert(
                    obj,
                    ObjectSlot {
                        live: true,
                        storage: None,
                    },
                );
                Ok(())
            }
        }
    }

    pub fn is_live(&self, obj: &KernelObjectId) -> bool {
        let inner = self.inner.lock().unwrap();
        inner.objects.get(obj).map(|s| s.live).unwrap_or(false)
    }

    /// Returns the object's storage handle; creates the storage iff
    /// `create_if_missing`. `Ok(None)` means "live object, no storage".
    pub fn storage_get(
        &self,
        obj: &KernelObjectId,
        create_if_missing: bool,
    ) -> Result<Option<StorageHandle>, StoreError> {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        let slot = inner
            .objects
            .get_mut(obj)
            .filter(|s| s.live)
            .ok_or(StoreError::DeadObject(*obj))?;
        let cell = match &slot.storage {
            Some(cell) => Arc::clone(cell),
            None => {
                if !create_if_missing {
                    return Ok(None);
                }
                let cell = Arc::new(StorageCell::default());
                slot.storage = Some(Arc::clone(&cell));
                inner.stats.created_total += 1;
                inner.stats.live_count += 1;
                cell
            }
        };
        Ok(Some(StorageHandle {
            owner: *obj,
            cell,
            store: Arc::downgrade(&self.inner),
        }))
    }

    /// Removes the object's storage explicitly.
    pub fn storage_delete(&self, obj: &KernelObjectId) -> Result<(), StoreError> {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        let slot = inner
            .objects
            .get_mut(obj)
            .filter(|s| s.live)
            .ok_or(StoreError::DeadObject(*obj))?;
        match slot.storage.take() {
            Some(cell) => {
                cell.kill();
                inner.stats.reclaimed_total += 1;
                inner.stats.live_count -= 1;
                Ok(())
            }
            None => Err(StoreError::NoStorage(*obj)),
        }
    }

    /// Ends the object's lifecycle. Its storage, if any, is reclaimed
    /// transparently; no explicit delete is needed.
    pub fn end_lifecycle(&self, obj: &KernelObjectId) -> Result<(), StoreError> {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        let slot = inner
            .objects
            .get_mut(obj)
            .filter(|s| s.live)
            .ok_or(StoreError::DeadObject(*obj))?;
        slot.live = false;
        if let Some(cell) = slot.storage.take() {
            cell.kill();
            inner.stats.reclaimed_total += 1;
            inner.stats.live_count -= 1;
        }
        Ok(())
    }

    /// Resolves a userspace identifier to the owning kernel object.
    pub fn resolve_external(&self, id: &ExternalId) -> Result<KernelObjectId, StoreError> {
        let inner = self.inner.lock().unwrap();
        let (kind, want): (ObjectKind, u64) = match id {
            ExternalId::Pid(pid) | ExternalId::Task(pid) => (ObjectKind::Task, *pid),
            ExternalId::Inode { fs_uuid, inode } => {
                let label = format!("inode {fs_uuid}:{inode}");
                let mut found = inner
                    .objects
                    .iter()
                    .filter(|(k, s)| {
                        s.live
                            && k.kind == ObjectKind::Inode
                            && k.fs_uuid == Some(*fs_uuid)
                            && k.local_id == *inode
                    })
                    .map(|(k, _)| *k);
                let first = found
                    .next()
                    .ok_or_else(|| StoreError::NoSuchObject(label.clone()))?;
                if found.next().is_some() {
                    return Err(StoreError::AmbiguousSelector(label));
                }
                return Ok(first);
            }
        };
        let mut found = inner
            .objects
            .iter()
            .filter(|(k, s)| s.live && k.kind == kind && k.local_id == want)
            .map(|(k, _)| *k);
        let task = found
            .next()
            .ok_or_else(|| StoreError::NoSuchObject(format!("pid {want}")))?;
        if found.next().is_some() {
            return Err(StoreError::AmbiguousSelector(format!("pid {want}")));
        }
        drop(inner);
        match id {
            ExternalId::Pid(_) => {
                // PID routes to the task's cred; the indirection is resolved
                // at each call, not bound at first lookup.
                let cred = KernelObjectId::cred_of(&task);
                if self.is_live(&cred) {
                    Ok(cred)
                } else {
                    Err(StoreError::NoSuchObject(format!("cred of pid {want}")))
                }
            }
            _ => Ok(task),
        }
    }

    /// Reads a storage value through a userspace identifier.
    pub fn userspace_lookup(
        &self,
        id: &ExternalId,
        key: &str,
    ) -> Result<Option<Vec<u8>>, StoreError> {
        let obj = self.resolve_external(id)?;
        match self.storage_get(&obj, false)? {
            Some(handle) => handle.get(key),
            None => Ok(None),
        }
    }

    /// Updates a storage value through a userspace identifier, creating the
    /// storage if needed.
    pub fn userspace_update(
        &self,
        id: &ExternalId,
        key: &str,
        value: Vec<u8>,
    ) -> Result<(), StoreError> {
        let obj = self.resolve_external(id)?;
        let handle = self.storage_get(&obj, true)?.expect("created storage");
        handle.put(key, value)
    }

    pub fn stats(&self) -> StorageStats {
        self.inner.lock().unwrap().stats
    }

    /// Oracle scan for leak checks: how many live objects currently hold
    /// storage.
    pub fn live_objects_with_storage(&self) -> u64 {
        let inner = self.inner.lock().unwrap();
        inner
            .objects
            .values()
            .filter(|s| s.live && s.storage.is_some())
            .count() as u64
    }

    /// All live objects, in deterministic (ordered) sequence.
    pub fn live_objects(&self) -> Vec<KernelObjectId> {
        let inner = self.inner.lock().unwrap();
        inner
            .objects
            .iter()
            .filter(|(_, s)| s.live)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Handle to one object's local storage, reaching the storage cell
/// directly. Remains valid to hold after the owner dies; operations then
/// fail with `DeadObject` (or `NoStorage` after an explicit delete).
#[derive(Debug, Clone)]
pub struct StorageHandle {
    owner: KernelObjectId,
    cell: Arc<StorageCell>,
    store: Weak<Mutex<StoreInner>>,
}

impl StorageHandle {
    pub fn owner(&self) -> KernelObjectId {
        self.owner
    }

    pub fn is_live(&self) -> bool {
        !self.cell.inner.lock().unwrap().dead
    }

    /// Distinguishes "owner died" from "storage was deleted while the owner
    /// lives" for a dead cell.
    fn dead_error(&self) -> StoreError {
        if let Some(store) = self.store.upgrade() {
            let inner = store.lock().unwrap();
            if inner.objects.get(&self.owner).map(|s| s.live).unwrap_or(false) {
                return StoreError::NoStorage(self.owner);
            }
        }
        StoreError::DeadObject(self.owner)
    }

    fn with_slots<T>(
        &self,
        f: impl FnOnce(&mut BTreeMap<String, Vec<u8>>) -> T,
    ) -> Result<T, StoreError> {
        let mut inner = self.cell.inner.lock().unwrap();
        if inner.dead {
            drop(inner);
            return Err(self.dead_error());
        }
        Ok(f(&mut inner.slots))
    }

    pub fn get(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        self.with_slots(|slots| slots.get(key).cloned())
    }

    pub fn put(&self, key: &str, value: Vec<u8>) -> Result<(), StoreError> {
        self.with_slots(|slots| {
            slots.insert(key.to_string(), value);
        })
    }

    pub fn remove(&self, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        self.with_slots(|slots| slots.remove(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(objs: &[KernelObjectId]) -> ObjectStore {
        let store = ObjectStore::new();
        for o in objs {
            store.register(*o).unwrap();
        }
        store
    }

    #[test]
    fn fresh_storage_is_empty_and_counted() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        let h = store.storage_get(&t, true).unwrap().unwrap();
        assert_eq!(h.get("k").unwrap(), None);
        assert_eq!(store.stats().created_total, 1);
        assert_eq!(store.stats().live_count, 1);
    }

    #[test]
    fn equal_inode_numbers_on_different_filesystems_are_distinct() {
        let a = KernelObjectId::inode(1, 42);
        let b = KernelObjectId::inode(2, 42);
        let store = store_with(&[a, b]);
        let ha = store.storage_get(&a, true).unwrap().unwrap();
        let hb = store.storage_get(&b, true).unwrap().unwrap();
        ha.put("k", b"fs1".to_vec()).unwrap();
        hb.put("k", b"fs2".to_vec()).unwrap();
        assert_eq!(ha.get("k").unwrap().unwrap(), b"fs1");
        assert_eq!(hb.get("k").unwrap().unwrap(), b"fs2");
        assert_eq!(store.stats().live_count, 2);
    }

    #[test]
    fn generations_of_a_recycled_id_are_distinct() {
        let g0 = KernelObjectId::new(ObjectKind::Inode, Some(1), 7, 0);
        let g1 = KernelObjectId::new(ObjectKind::Inode, Some(1), 7, 1);
        let store = store_with(&[g0]);
        store.storage_get(&g0, true).unwrap();
        store.end_lifecycle(&g0).unwrap();
        store.register(g1).unwrap();
        let h = store.storage_get(&g1, true).unwrap().unwrap();
        assert_eq!(h.get("k").unwrap(), None);
        // re-registering the dead id itself is refused
        assert_eq!(store.register(g0), Err(StoreError::DeadObject(g0)));
    }

    #[test]
    fn get_without_create_on_missing_storage_is_absent() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        assert!(store.storage_get(&t, false).unwrap().is_none());
    }

    #[test]
    fn delete_then_get_is_absent_and_delete_twice_errors() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        let old = store.storage_get(&t, true).unwrap().unwrap();
        store.storage_delete(&t).unwrap();
        assert!(store.storage_get(&t, false).unwrap().is_none());
        assert_eq!(store.storage_delete(&t), Err(StoreError::NoStorage(t)));
        // stale handles see the deletion, not the replacement storage
        assert_eq!(old.get("k"), Err(StoreError::NoStorage(t)));
        // delete then create again yields a fresh empty storage
        let h = store.storage_get(&t, true).unwrap().unwrap();
        assert_eq!(h.get("k").unwrap(), None);
        assert_eq!(store.stats().created_total, 2);
        assert_eq!(store.stats().reclaimed_total, 1);
    }

    #[test]
    fn end_lifecycle_reclaims_without_explicit_delete() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        let h = store.storage_get(&t, true).unwrap().unwrap();
        h.put("k", vec![1]).unwrap();
        store.end_lifecycle(&t).unwrap();
        assert_eq!(store.stats().reclaimed_total, 1);
        assert_eq!(store.stats().live_count, 0);
        assert!(!h.is_live());
        assert_eq!(h.get("k"), Err(StoreError::DeadObject(t)));
        assert_eq!(store.end_lifecycle(&t), Err(StoreError::DeadObject(t)));
    }

    #[test]
    fn end_lifecycle_without_storage_leaves_stats_unchanged() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        store.end_lifecycle(&t).unwrap();
        assert_eq!(store.stats(), StorageStats::default());
    }

    #[test]
    fn thousand_lifecycles_leave_no_leaks() {
        let store = ObjectStore::new();
        let objs: Vec<_> = (0..1000).map(KernelObjectId::task).collect();
        for o in &objs {
            store.register(*o).unwrap();
            store.storage_get(o, true).unwrap();
        }
        assert_eq!(store.stats().live_count, 1000);
        assert_eq!(store.live_objects_with_storage(), 1000);
        for o in &objs {
            store.end_lifecycle(o).unwrap();
        }
        let stats = store.stats();
        assert_eq!(stats.live_count, 0);
        assert_eq!(stats.created_total, 1000);
        assert_eq!(stats.reclaimed_total, 1000);
        assert_eq!(store.live_objects_with_storage(), 0);
    }

    #[test]
    fn pid_lookup_routes_to_cred_storage() {
        let task = KernelObjectId::task(77);
        let cred = KernelObjectId::cred_of(&task);
        let store = store_with(&[task, cred]);
        store
            .userspace_update(&ExternalId::Pid(77), "ctx", b"label".to_vec())
            .unwrap();
        // visible in-engine through the cred object's storage
        let h = store.storage_get(&cred, false).unwrap().unwrap();
        assert_eq!(h.get("ctx").unwrap().unwrap(), b"label");
        assert_eq!(
            store
                .userspace_lookup(&ExternalId::Pid(77), "ctx")
                .unwrap()
                .unwrap(),
            b"label"
        );
    }

    #[test]
    fn pid_lookup_after_task_death_is_no_such_object() {
        let task = KernelObjectId::task(77);
        let cred = KernelObjectId::cred_of(&task);
        let store = store_with(&[task, cred]);
        store
            .userspace_update(&ExternalId::Pid(77), "ctx", vec![1])
            .unwrap();
        store.end_lifecycle(&task).unwrap();
        assert!(matches!(
            store.userspace_lookup(&ExternalId::Pid(77), "ctx"),
            Err(StoreError::NoSuchObject(_))
        ));
    }

    #[test]
    fn ambiguous_pid_is_rejected() {
        let a = KernelObjectId::new(ObjectKind::Task, None, 5, 0);
        let b = KernelObjectId::new(ObjectKind::Task, None, 5, 1);
        let store = store_with(&[a, b]);
        assert!(matches!(
            store.resolve_external(&ExternalId::Task(5)),
            Err(StoreError::AmbiguousSelector(_))
        ));
    }

    #[test]
    fn concurrent_access_on_distinct_objects_is_safe() {
        let store = ObjectStore::new();
        let objs: Vec<_> = (0..8).map(KernelObjectId::task).collect();
        for o in &objs {
            store.register(*o).unwrap();
        }
        let mut handles = Vec::new();
        for o in objs.clone() {
            let store = store.clone();
            handles.push(std::thread::spawn(move || {
                for i in 0..200u64 {
                    let h = store.storage_get(&o, true).unwrap().unwrap();
                    h.put("n", i.to_le_bytes().to_vec()).unwrap();
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.stats().live_count, 8);
        for o in &objs {
            let h = store.storage_get(o, false).unwrap().unwrap();
            assert_eq!(h.get("n").unwrap().unwrap(), 199u64.to_le_bytes());
        }
    }

    #[test]
    fn lifecycle_end_linearizes_against_inflight_access() {
        let t = KernelObjectId::task(1);
        let store = store_with(&[t]);
        let h = store.storage_get(&t, true).unwrap().unwrap();
        h.put("k", vec![1]).unwrap();
        let reader = {
            let h = h.clone();
            std::thread::spawn(move || {
                let mut oks = 0u32;
                loop {
                    match h.get("k") {
                        Ok(Some(v)) => {
                            assert_eq!(v, vec![1], "reader saw partial state");
                            oks += 1;
                        }
                        Ok(None) => panic!("reader saw a cleared-but-live storage"),
                        Err(_) => return oks,
                    }
                }
            })
        };
        std::thread::sleep(std::time::Duration::from_millis(5));
        store.end_lifecycle(&t).unwrap();
        let oks = reader.join().unwrap();
        assert!(oks > 0, "reader should have observed the value before the end");
    }
}

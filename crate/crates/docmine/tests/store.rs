use docmine::adapters::Adapters;
use docmine::export::ExportFormat;
use docmine::fixture::{generate_corpus, golden_document, GOLDEN_TITLE};
use docmine::store::{
    DirStorage, MemoryStorage, NewProject, ParseStatus, SettingsUpdate, Store, StoreError, StoreSettings, VirtualClock, RECENT_LIMIT,
};
use docmine_core::correction::Module;
use docmine_core::geom::Point;
use docmine_core::integrate::{HeaderConfig, HeaderEdit};
use docmine_core::lock::UserId;
use docmine_core::map::MapStage;
use docmine_core::table::PipelineStage;
use docmine_core::text::{LabelConfig, Rule};
use docmine_core::time::{Duration, Timestamp};
use docmine_core::CoreError;
use std::sync::Arc;

const T0: Timestamp = Timestamp(1_700_000_000_000);

struct SharedClock(Arc<VirtualClock>);

impl docmine::store::Clock for SharedClock {
    fn now(&self) -> Timestamp {
        docmine::store::Clock::now(&*self.0)
    }
}

fn settings() -> StoreSettings {
    StoreSettings { bcrypt_cost: 4, ..StoreSettings::default() }
}

fn store_with(storage: MemoryStorage) -> (Store, Arc<VirtualClock>) {
    let clock = Arc::new(VirtualClock::new(T0));
    let store = Store::open(Box::new(storage), Box::new(SharedClock(clock.clone())), settings(), Adapters::default()).unwrap();
    (store, clock)
}

fn header() -> HeaderConfig {
    let fields = ["sample id", "age", "error", "locality", "latitude", "longitude"];
    HeaderConfig::new(fields.iter().map(|s| s.to_string()).collect(), "sample id").unwrap()
}

fn project(store: &Store, user: &UserId) -> String {
    let labels = vec![LabelConfig {
        label: "locality".into(),
        rules: vec![Rule::Gazetteer(vec!["Palma Sola".into(), "Riachuelos".into()])],
        visible: true,
        linked_field: Some("locality".into()),
    }];
    let p = NewProject { name: "Veracruz beaches".into(), description: String::new(), label_configs: labels, header: Some(header()) };
    store.create_project(user, p).unwrap().project_id
}

/// Drives fixture document #1 from upload to a confirmed table, a linked
/// span and a point attached to PS-01.
fn golden_pipeline(store: &Store, user: &UserId, project_id: &str) -> String {
    let doc = golden_document();
    let rec = store.upload_and_process(user, project_id, "doc01.pdf", &doc.pdf).unwrap();
    assert_eq!(rec.status, ParseStatus::Parsed);
    let f = rec.file_id;
    store.acquire_lock(user, &f).unwrap();

    let meta = store.get_meta(&f).unwrap();
    assert_eq!(meta.record.title, GOLDEN_TITLE);
    store.save_meta(user, &f, meta.record).unwrap();

    let tables = store.detect_tables(user, &f).unwrap();
    assert_eq!(tables.len(), 1);
    let t = tables[0].clone();
    store.confirm_table_region(user, &f, &t.table_id, t.region).unwrap();
    store.propose_structure(user, &f, &t.table_id).unwrap();
    store.confirm_structure(user, &f, &t.table_id).unwrap();
    store.propose_content(user, &f, &t.table_id).unwrap();
    let t = store.confirm_table(user, &f, &t.table_id).unwrap();
    assert_eq!(t.stage, PipelineStage::ContentConfirmed);

    let spans = store.list_spans(&f).unwrap();
    let ps = spans.iter().find(|s| s.text == "Palma Sola").expect("Palma Sola span");
    assert_eq!(ps.linked_field.as_deref(), Some("locality"));
    for s in spans.iter().filter(|s| s.span_id != ps.span_id) {
        store.link_span(user, &f, &s.span_id, None).unwrap();
    }

    let maps = store.detect_maps(user, &f).unwrap();
    assert_eq!(maps.len(), 1);
    let m = maps[0].clone();
    store.confirm_map_region(user, &f, &m.map_id, m.region).unwrap();
    let m = store.propose_gridlines(user, &f, &m.map_id).unwrap();
    assert_eq!(m.gridlines.len(), 6);
    store.fit_map(user, &f, &m.map_id).unwrap();
    store.confirm_calibration(user, &f, &m.map_id).unwrap();
    let p = store.mark_point(user, &f, &m.map_id, Point { x: 180.0, y: 40.0 }).unwrap();
    assert_eq!((p.latitude, p.longitude), (19.75, -96.416667));
    store.attach_point(user, &f, &m.map_id, &p.point_id, Some("PS-01")).unwrap();
    f
}

#[test]
fn golden_pipeline_exports_expected_rows() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    golden_pipeline(&store, &u, &p);
    let csv = String::from_utf8(store.export_project(&p, ExportFormat::Csv).unwrap()).unwrap();
    let golden = include_str!("golden/doc01.csv");
    assert_eq!(csv, golden);
}

#[test]
fn duplicate_empty_and_corrupt_uploads() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let doc = golden_document();
    let first = store.upload_and_process(&u, &p, "a.pdf", &doc.pdf).unwrap();
    match store.upload_file(&u, &p, "b.pdf", &doc.pdf) {
        Err(StoreError::DuplicateChecksum { existing }) => assert_eq!(existing, first.file_id),
        other => panic!("expected duplicate, got {other:?}"),
    }
    let other = store.create_project(&u, NewProject { name: "other".into(), ..Default::default() }).unwrap();
    assert!(store.upload_file(&u, &other.project_id, "a.pdf", &doc.pdf).is_ok());
    assert_eq!(store.upload_file(&u, &p, "e.pdf", b""), Err(StoreError::EmptyUpload));

    let bad = store.upload_and_process(&u, &p, "bad.pdf", &doc.pdf[..doc.pdf.len() / 3]).unwrap();
    match bad.status {
        ParseStatus::Failed { detail } => assert!(detail.to_lowercase().contains("malformed"), "{detail}"),
        s => panic!("expected failure, got {s:?}"),
    }
    assert_eq!(store.get_meta(&bad.file_id), Err(StoreError::NotParsed(bad.file_id.clone())));
}

#[test]
fn concurrent_uploads_keep_checksums_unique() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let pdf = golden_document().pdf;
    let ok = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8).map(|_| s.spawn(|| store.upload_file(&u, &p, "a.pdf", &pdf).is_ok())).collect();
        handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count()
    });
    assert_eq!(ok, 1);
    assert_eq!(store.list_files(&p).unwrap().len(), 1);
}

#[test]
fn mutations_need_the_lease_and_respect_the_principal() {
    let (store, clock) = store_with(MemoryStorage::default());
    let (a, b) = (UserId::new("ana"), UserId::new("bo"));
    let p = project(&store, &a);
    let f = store.upload_and_process(&a, &p, "a.pdf", &golden_document().pdf).unwrap().file_id;

    assert_eq!(store.detect_tables(&a, &f), Err(StoreError::Core(CoreError::NotLocked)));
    store.acquire_lock(&a, &f).unwrap();
    assert!(matches!(store.acquire_lock(&b, &f), Err(StoreError::Core(CoreError::LockHeld { .. }))));
    assert!(matches!(store.renew_lock(&b, &f), Err(StoreError::Core(CoreError::LockHeld { .. }))));
    assert_eq!(store.detect_tables(&b, &f), Err(StoreError::Core(CoreError::NotLocked)));
    store.detect_tables(&a, &f).unwrap();

    // After expiry another user may claim the file and the old holder loses it.
    clock.advance(Duration::from_mins(11));
    assert!(store.get_file(&f).unwrap().lock.is_none());
    store.acquire_lock(&b, &f).unwrap();
    assert_eq!(store.detect_tables(&a, &f), Err(StoreError::Core(CoreError::NotLocked)));

    // The principal evicts a holder idle for half a lease.
    store.take_charge(&a, &f).unwrap();
    assert!(matches!(store.take_charge(&b, &f), Err(StoreError::Core(CoreError::PrincipalHeld(_)))));
    assert!(matches!(store.acquire_lock(&a, &f), Err(StoreError::Core(CoreError::LockHeld { .. }))));
    clock.advance(Duration::from_mins(5));
    store.acquire_lock(&a, &f).unwrap();
    assert_eq!(store.my_files(&a).unwrap().len(), 1);
    assert!(store.my_files(&b).unwrap().is_empty());
    store.release_charge(&a, &f).unwrap();
    assert!(store.my_files(&a).unwrap().is_empty());
}

#[test]
fn recent_files_keep_the_last_twenty_opened() {
    let (store, clock) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let ids: Vec<String> = (0..25u8).map(|i| store.upload_file(&u, &p, "x.pdf", &[b'%', i]).unwrap().file_id).collect();
    for id in &ids {
        clock.advance(Duration::from_secs(1));
        store.open_file(&u, id).unwrap();
    }
    store.open_file(&u, &ids[10]).unwrap();
    let recent: Vec<String> = store.recent_files(&u).unwrap().into_iter().map(|f| f.file_id).collect();
    assert_eq!(recent.len(), RECENT_LIMIT);
    assert_eq!(recent[0], ids[10]);
    assert_eq!(recent[1], ids[24]);
    assert!(recent.contains(&ids[5]));
    assert!(!recent.contains(&ids[4]));
    assert!(store.recent_files(&UserId::new("bo")).unwrap().is_empty());
}

#[test]
fn search_ranks_by_matching_tokens() {
    let (store, clock) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let mut ids = Vec::new();
    for f in generate_corpus(7, 3) {
        clock.advance(Duration::from_secs(1));
        ids.push((store.upload_and_process(&u, &p, "x.pdf", &f.pdf).unwrap().file_id, f.truth.meta.title));
    }
    let all: Vec<String> = store.search_files(&p, "").unwrap().into_iter().map(|f| f.file_id).collect();
    assert_eq!(all, ids.iter().rev().map(|(id, _)| id.clone()).collect::<Vec<_>>());
    let (target, title) = &ids[1];
    let word = title.split_whitespace().max_by_key(|w| w.len()).unwrap();
    let hits = store.search_files(&p, word).unwrap();
    assert_eq!(&hits[0].file_id, target);
}

#[test]
fn restart_preserves_state_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new(T0));
    let open = || {
        let storage = DirStorage::open(dir.path()).unwrap();
        Store::open(Box::new(storage), Box::new(SharedClock(clock.clone())), settings(), Adapters::default()).unwrap()
    };
    let store = open();
    store.add_user("ana", "Ana", "pw").unwrap();
    let u = UserId::new("ana");
    let p = project(&store, &u);
    golden_pipeline(&store, &u, &p);
    let before_csv = store.export_project(&p, ExportFormat::Csv).unwrap();
    let snapshot = store.snapshot_bytes().unwrap();
    let state = store.state();
    drop(store);

    let reopened = open();
    assert_eq!(reopened.snapshot_bytes().unwrap(), snapshot);
    assert_eq!(reopened.state(), state);
    assert_eq!(reopened.export_project(&p, ExportFormat::Csv).unwrap(), before_csv);
    assert!(reopened.login("ana", "pw").is_ok());
}

#[test]
fn sessions_expire_and_bad_passwords_fail() {
    let (store, clock) = store_with(MemoryStorage::default());
    store.add_user("ana", "Ana", "secret").unwrap();
    assert_eq!(store.add_user("ana", "Ana", "x"), Err(StoreError::UserExists("ana".into())));
    assert_eq!(store.login("ana", "wrong"), Err(StoreError::InvalidCredentials));
    assert_eq!(store.login("nobody", "secret"), Err(StoreError::InvalidCredentials));
    let s = store.login("ana", "secret").unwrap();
    assert_eq!(store.authenticate(&s.token), Ok(UserId::new("ana")));
    assert!(!String::from_utf8(store.snapshot_bytes().unwrap()).unwrap().contains(&s.token));
    clock.advance(Duration::from_mins(13 * 60));
    assert_eq!(store.authenticate(&s.token), Err(StoreError::Unauthenticated));
    let s = store.login("ana", "secret").unwrap();
    store.logout(&s.token).unwrap();
    assert_eq!(store.authenticate(&s.token), Err(StoreError::Unauthenticated));
}

#[test]
fn corrections_are_logged_and_exported_in_time_order() {
    let (store, clock) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let f = store.upload_and_process(&u, &p, "a.pdf", &golden_document().pdf).unwrap().file_id;
    store.acquire_lock(&u, &f).unwrap();
    let t = store.detect_tables(&u, &f).unwrap().remove(0);
    let mut region = t.region;
    region.x0 -= 2.0;
    clock.advance(Duration::from_secs(1));
    store.confirm_table_region(&u, &f, &t.table_id, region).unwrap();
    store.propose_structure(&u, &f, &t.table_id).unwrap();
    store.confirm_structure(&u, &f, &t.table_id).unwrap();
    store.propose_content(&u, &f, &t.table_id).unwrap();
    clock.advance(Duration::from_secs(1));
    store.edit_cell(&u, &f, &t.table_id, 1, 1, "18.5").unwrap();
    let span = store.list_spans(&f).unwrap().remove(0);
    store.delete_span(&u, &f, &span.span_id).unwrap();

    let events = store.corrections_for(&f).unwrap();
    let modules: Vec<Module> = events.iter().map(|e| e.module).collect();
    assert_eq!(modules, [Module::Table, Module::Table, Module::Text]);
    let ndjson = String::from_utf8(store.export_corrections(&p).unwrap()).unwrap();
    let lines: Vec<serde_json::Value> = ndjson.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.windows(2).all(|w| w[0]["time"].as_i64() <= w[1]["time"].as_i64()));
    assert_eq!(lines[1]["after"]["text"], "18.5");
}

#[test]
fn repeated_detection_and_confirmation_are_no_ops() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let f = store.upload_and_process(&u, &p, "a.pdf", &golden_document().pdf).unwrap().file_id;
    store.acquire_lock(&u, &f).unwrap();
    let first = store.detect_tables(&u, &f).unwrap();
    assert_eq!(store.detect_tables(&u, &f).unwrap(), first);
    let id = first[0].table_id.clone();
    store.confirm_table_region(&u, &f, &id, first[0].region).unwrap();
    assert_eq!(store.detect_tables(&u, &f).unwrap().len(), 1);
    store.propose_structure(&u, &f, &id).unwrap();
    store.confirm_structure(&u, &f, &id).unwrap();
    store.propose_content(&u, &f, &id).unwrap();
    let once = store.confirm_table(&u, &f, &id).unwrap();
    let twice = store.confirm_table(&u, &f, &id).unwrap();
    assert_eq!(once.confirmation_seq, twice.confirmation_seq);
    let maps = store.detect_maps(&u, &f).unwrap();
    assert_eq!(store.detect_maps(&u, &f).unwrap(), maps);
    store.confirm_map_region(&u, &f, &maps[0].map_id, maps[0].region).unwrap();
    assert_eq!(store.revert_map(&u, &f, &maps[0].map_id, MapStage::Detected).unwrap().stage, MapStage::Detected);
}

#[test]
fn header_changes_reapply_to_documents() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let f = golden_pipeline(&store, &u, &p);
    let ds = store.integrate_document(&f).unwrap();
    assert!(ds.columns.contains(&"age".to_string()));

    let edited = store.edit_header(&p, &[HeaderEdit::Add { name: "notes".into(), position: None }]).unwrap();
    assert_eq!(edited.header.unwrap().fields.last().map(String::as_str), Some("notes"));
    let ds = store.state().documents[&f].dataset.clone().unwrap();
    assert_eq!(ds.columns[6], "notes");

    let err = store.edit_header(&p, &[HeaderEdit::Remove { name: "locality".into() }]);
    assert!(err.is_err(), "the locality label still links to the field");
    let narrow = HeaderConfig::new(vec!["age".into()], "age").unwrap();
    store.update_settings(&p, SettingsUpdate { header: Some(narrow), label_configs: Some(vec![]), ..Default::default() }).unwrap();
    let ds = store.state().documents[&f].dataset.clone().unwrap();
    assert_eq!(ds.columns, ["age", "Metadata ID"]);
    let ages: Vec<&str> = ds.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ages, ["18.4", "21.7", "312.5", "1024.0"]);

    // A key the confirmed table cannot supply drops the dataset with a warning.
    let t = store.list_tables(&f).unwrap()[0].table_id.clone();
    store.set_column_mapping(&u, &f, &t, vec![Some("age".into()), None, None, None]).unwrap();
    let wide = HeaderConfig::new(vec!["sample".into(), "age".into()], "sample").unwrap();
    store.update_settings(&p, SettingsUpdate { header: Some(wide), ..Default::default() }).unwrap();
    assert!(store.state().documents[&f].dataset.is_none());
    assert!(store.get_file(&f).unwrap().warnings.iter().any(|w| w.contains("dataset dropped")));
}

#[test]
fn manual_spans_and_links_validate_input() {
    let (store, _) = store_with(MemoryStorage::default());
    let u = UserId::new("ana");
    let p = project(&store, &u);
    let f = store.upload_and_process(&u, &p, "a.pdf", &golden_document().pdf).unwrap().file_id;
    store.acquire_lock(&u, &f).unwrap();
    let sections = store.sections(&f).unwrap();
    let (si, text) = sections.iter().enumerate().find(|(_, s)| s.contains("Veracruz coast")).unwrap();
    let start = text[..text.find("Veracruz coast").unwrap()].chars().count();
    let span = store.add_manual_span(&u, &f, si, start, start + 14, "locality").unwrap();
    assert_eq!(span.text, "Veracruz coast");
    assert_eq!(store.add_manual_span(&u, &f, si, start, start + 14, "locality").unwrap(), span);
    assert_eq!(store.add_manual_span(&u, &f, si, start, start + 3, "nope"), Err(CoreError::UnknownLabel("nope".into()).into()));
    assert!(matches!(store.add_manual_span(&u, &f, si, 5, 5, "locality"), Err(StoreError::Core(CoreError::InvalidOffsets { .. }))));
    assert_eq!(store.link_span(&u, &f, &span.span_id, Some("colour")), Err(CoreError::UnknownField("colour".into()).into()));
    store.link_span(&u, &f, &span.span_id, Some("locality")).unwrap();

    let before = store.list_spans(&f).unwrap();
    let after = store.reannotate(&u, &f).unwrap();
    assert!(after.iter().any(|s| s.span_id == span.span_id));
    assert_eq!(before.len(), after.len());
    assert!(store.corrections_for(&f).unwrap().is_empty());
}

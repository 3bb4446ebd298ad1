//! The four-phase session: confession, contemplation, response, release.

mod driver;
mod seal;
mod session;

pub use driver::{
    run_session, ActivityInterval, RitualDeps, RitualHost, Segment, SessionEvent, SessionEventKind, SessionOutcome, StillnessCriterion,
    Timeline, CONTEMPLATION_SECONDS,
};
pub use seal::{canonical_json, open_record, seal_session, EncryptedRecord, SealKey, SEAL_KEY_ENV, WWR_MAGIC};
pub use session::{Confession, Phase, RitualEvent, RitualSession, MAX_CONFESSION_SECONDS};

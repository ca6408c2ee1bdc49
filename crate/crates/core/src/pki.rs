//! The certificate authority hierarchy.
//!
//! A single home CA holds every vehicle registration (identity, per-vehicle
//! key, certificate kind). Local CAs each own one rectangular region, the
//! region's key pair and its group authentication key. Group keys are only
//! handed out to holders of a valid certificate, and a local CA can fetch a
//! vehicle's key from the home CA over a trusted in-process channel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::crypto::{generate_keypair, KeyPair, SymmetricKey};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VehicleId([u8; 16]);

impl VehicleId {
    pub const LEN: usize = 16;

    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    /// Identifier used by the simulator for the vehicle at `index`.
    pub const fn from_index(index: u64) -> Self {
        Self((index as u128).to_be_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VehicleId({self})")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaId([u8; 8]);

impl CaId {
    pub const LEN: usize = 8;

    pub const fn from_bytes(bytes: [u8; 8]) -> Self {
        Self(bytes)
    }

    pub const fn from_u64(id: u64) -> Self {
        Self(id.to_be_bytes())
    }

    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl fmt::Display for CaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for CaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CaId({self})")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertificateKind {
    ValidCertificate,
    AdversaryCertificate,
}

impl CertificateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateKind::ValidCertificate => "VC",
            CertificateKind::AdversaryCertificate => "AC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenialReason {
    CertificateRevoked,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PkiError {
    #[error("vehicle {0} is already registered")]
    AlreadyRegistered(VehicleId),
    #[error("vehicle {0} is not registered")]
    NotRegistered(VehicleId),
    #[error("group key denied: {0:?}")]
    Denied(DenialReason),
    #[error("CA {0} is not an authorized local CA")]
    UnauthorizedCa(CaId),
    #[error("position ({x}, {y}) is outside every region")]
    OutOfCoverage { x: f64, y: f64 },
    #[error("regions {first} and {second} overlap")]
    Overlap { first: CaId, second: CaId },
    #[error("region {0} has degenerate bounds")]
    DegenerateRegion(CaId),
    #[error("region id {0} is used twice")]
    DuplicateRegion(CaId),
}

impl PkiError {
    pub fn code(&self) -> &'static str {
        match self {
            PkiError::AlreadyRegistered(_) => "already_registered",
            PkiError::NotRegistered(_) => "not_registered",
            PkiError::Denied(DenialReason::CertificateRevoked) => "certificate_revoked",
            PkiError::UnauthorizedCa(_) => "unauthorized_ca",
            PkiError::OutOfCoverage { .. } => "out_of_coverage",
            PkiError::Overlap { .. } => "overlap",
            PkiError::DegenerateRegion(_) => "degenerate_region",
            PkiError::DuplicateRegion(_) => "duplicate_region",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub vehicle: VehicleId,
    pub vehicle_key: SymmetricKey,
    pub certificate: CertificateKind,
    pub home_ca: CaId,
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_degenerate(&self) -> bool {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        !(finite && self.x1 > self.x0 && self.y1 > self.y0)
    }

    /// Closed containment; shared edges are resolved by [`RegionMap::locate`].
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn interiors_intersect(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn centroid(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
}

/// Checks non-degeneracy and pairwise interior disjointness without building
/// any key material.
pub fn check_disjoint(bounds: &[(CaId, Rect)]) -> Result<(), PkiError> {
    let mut ids = BTreeSet::new();
    for (id, rect) in bounds {
        if rect.is_degenerate() {
            return Err(PkiError::DegenerateRegion(*id));
        }
        if !ids.insert(*id) {
            return Err(PkiError::DuplicateRegion(*id));
        }
    }
    for (i, (a_id, a)) in bounds.iter().enumerate() {
        for (b_id, b) in &bounds[i + 1..] {
            if a.interiors_intersect(b) {
                return Err(PkiError::Overlap {
                    first: *a_id,
                    second: *b_id,
                });
            }
        }
    }
    Ok(())
}

/// One local CA's area of responsibility.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: CaId,
    pub bounds: Rect,
    pub group_key: SymmetricKey,
    pub ca_keys: KeyPair,
}

impl Region {
    pub fn new(id: CaId, bounds: Rect, group_key: SymmetricKey, ca_keys: KeyPair) -> Result<Self, PkiError> {
        if bounds.is_degenerate() {
            return Err(PkiError::DegenerateRegion(id));
        }
        Ok(Self {
            id,
            bounds,
            group_key,
            ca_keys,
        })
    }

    /// Derives the group key and CA key pair from two independent seeds.
    pub fn generate(
        id: CaId,
        bounds: Rect,
        group_key_seed: &[u8; 32],
        keypair_seed: &[u8; 32],
    ) -> Result<Self, PkiError> {
        Self::new(
            id,
            bounds,
            SymmetricKey::from_seed(group_key_seed),
            generate_keypair(keypair_seed),
        )
    }
}

/// Disjoint partition of the plane into regions, in declaration order.
#[derive(Debug, Clone)]
pub struct RegionMap {
    regions: Vec<Region>,
}

impl RegionMap {
    pub fn new(regions: Vec<Region>) -> Result<Self, PkiError> {
        let bounds: Vec<_> = regions.iter().map(|r| (r.id, r.bounds)).collect();
        check_disjoint(&bounds)?;
        Ok(Self { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn get(&self, id: CaId) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn index_of(&self, id: CaId) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// The region containing `(x, y)`. A point on an edge shared by several
    /// regions belongs to the lowest-indexed one.
    pub fn locate(&self, x: f64, y: f64) -> Result<&Region, PkiError> {
        self.locate_index(x, y).map(|i| &self.regions[i])
    }

    pub fn locate_index(&self, x: f64, y: f64) -> Result<usize, PkiError> {
        self.regions
            .iter()
            .position(|r| r.bounds.contains(x, y))
            .ok_or(PkiError::OutOfCoverage { x, y })
    }
}

/// Returns the region's group key iff the registration holds a valid certificate.
pub fn issue_group_key(region: &Region, registration: &Registration) -> Result<SymmetricKey, PkiError> {
    match registration.certificate {
        CertificateKind::ValidCertificate => Ok(region.group_key.clone()),
        CertificateKind::AdversaryCertificate => Err(PkiError::Denied(DenialReason::CertificateRevoked)),
    }
}

/// Registration store of the home CA, plus the roster of local CAs allowed to
/// request escrowed keys.
#[derive(Debug, Clone)]
pub struct CaStore {
    id: CaId,
    local_cas: BTreeSet<CaId>,
    registrations: BTreeMap<VehicleId, Registration>,
}

impl CaStore {
    pub fn new(id: CaId) -> Self {
        Self {
            id,
            local_cas: BTreeSet::new(),
            registrations: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> CaId {
        self.id
    }

    pub fn authorize_local_ca(&mut self, ca: CaId) {
        self.local_cas.insert(ca);
    }

    pub fn is_authorized(&self, ca: CaId) -> bool {
        self.local_cas.contains(&ca)
    }

    pub fn register_vehicle(
        &mut self,
        vehicle: VehicleId,
        kind: CertificateKind,
        key_seed: &[u8; 32],
    ) -> Result<Registration, PkiError> {
        if self.registrations.contains_key(&vehicle) {
            return Err(PkiError::AlreadyRegistered(vehicle));
        }
        let registration = Registration {
            vehicle,
            vehicle_key: SymmetricKey::from_seed(key_seed),
            certificate: kind,
            home_ca: self.id,
        };
        self.registrations.insert(vehicle, registration.clone());
        Ok(registration)
    }

    pub fn registration(&self, vehicle: VehicleId) -> Option<&Registration> {
        self.registrations.get(&vehicle)
    }

    pub fn registrations(&self) -> impl Iterator<Item = &Registration> {
        self.registrations.values()
    }

    pub fn len(&self) -> usize {
        self.registrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registrations.is_empty()
    }

    /// Marks the vehicle adversarial. Idempotent.
    pub fn flag_adversary(&mut self, vehicle: VehicleId) -> Result<Registration, PkiError> {
        let registration = self
            .registrations
            .get_mut(&vehicle)
            .ok_or(PkiError::NotRegistered(vehicle))?;
        registration.certificate = CertificateKind::AdversaryCertificate;
        Ok(registration.clone())
    }

    pub fn issue_group_key(&self, region: &Region, vehicle: VehicleId) -> Result<SymmetricKey, PkiError> {
        let registration = self.registration(vehicle).ok_or(PkiError::NotRegistered(vehicle))?;
        issue_group_key(region, registration)
    }

    /// Releases a vehicle's key to an authorized local CA.
    pub fn escrow_key(&self, requester: CaId, vehicle: VehicleId) -> Result<SymmetricKey, PkiError> {
        if !self.is_authorized(requester) {
            return Err(PkiError::UnauthorizedCa(requester));
        }
        self.registration(vehicle)
            .map(|r| r.vehicle_key.clone())
            .ok_or(PkiError::NotRegistered(vehicle))
    }

    /// `vehicle_id_hex,certificate_kind,home_ca_id_hex`, one row per vehicle, ordered by id.
    pub fn roster_csv(&self) -> String {
        let mut out = String::from("vehicle_id_hex,certificate_kind,home_ca_id_hex\n");
        for r in self.registrations.values() {
            out.push_str(&format!("{},{},{}\n", r.vehicle, r.certificate.as_str(), r.home_ca));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region(id: u64, bounds: Rect) -> Region {
        Region::generate(CaId::from_u64(id), bounds, &[id as u8; 32], &[0x40 + id as u8; 32]).unwrap()
    }

    fn two_regions() -> RegionMap {
        RegionMap::new(vec![
            region(1, Rect::new(0.0, 0.0, 1000.0, 1000.0)),
            region(2, Rect::new(1000.0, 0.0, 2000.0, 1000.0)),
        ])
        .unwrap()
    }

    fn store() -> CaStore {
        let mut s = CaStore::new(CaId::from_u64(0));
        s.authorize_local_ca(CaId::from_u64(1));
        s
    }

    #[test]
    fn register_fresh_and_duplicate() {
        let mut s = store();
        let v = VehicleId::from_index(1);
        let r = s
            .register_vehicle(v, CertificateKind::ValidCertificate, &[1; 32])
            .unwrap();
        assert_eq!(r.certificate, CertificateKind::ValidCertificate);
        assert_eq!(r.home_ca, CaId::from_u64(0));
        assert_eq!(
            s.register_vehicle(v, CertificateKind::ValidCertificate, &[2; 32])
                .unwrap_err(),
            PkiError::AlreadyRegistered(v)
        );
        let other = s
            .register_vehicle(VehicleId::from_index(2), CertificateKind::ValidCertificate, &[2; 32])
            .unwrap();
        assert_ne!(r.vehicle_key, other.vehicle_key);
    }

    #[test]
    fn group_key_gate() {
        let map = two_regions();
        let r1 = &map.regions()[0];
        let mut s = store();
        let good = VehicleId::from_index(1);
        let bad = VehicleId::from_index(2);
        s.register_vehicle(good, CertificateKind::ValidCertificate, &[1; 32])
            .unwrap();
        s.register_vehicle(bad, CertificateKind::AdversaryCertificate, &[2; 32])
            .unwrap();
        assert_eq!(s.issue_group_key(r1, good).unwrap(), r1.group_key);
        assert_eq!(
            s.issue_group_key(r1, bad).unwrap_err(),
            PkiError::Denied(DenialReason::CertificateRevoked)
        );
        let ghost = VehicleId::from_index(3);
        assert_eq!(
            s.issue_group_key(r1, ghost).unwrap_err(),
            PkiError::NotRegistered(ghost)
        );
    }

    #[test]
    fn flagging_is_idempotent_and_revokes() {
        let map = two_regions();
        let mut s = store();
        let v = VehicleId::from_index(1);
        s.register_vehicle(v, CertificateKind::ValidCertificate, &[1; 32])
            .unwrap();
        assert!(s.issue_group_key(&map.regions()[0], v).is_ok());
        assert_eq!(
            s.flag_adversary(v).unwrap().certificate,
            CertificateKind::AdversaryCertificate
        );
        assert_eq!(
            s.flag_adversary(v).unwrap().certificate,
            CertificateKind::AdversaryCertificate
        );
        for region in map.regions() {
            assert!(matches!(s.issue_group_key(region, v), Err(PkiError::Denied(_))));
        }
        let ghost = VehicleId::from_index(9);
        assert_eq!(s.flag_adversary(ghost).unwrap_err(), PkiError::NotRegistered(ghost));
    }

    #[test]
    fn escrow() {
        let mut s = store();
        let v = VehicleId::from_index(1);
        let r = s
            .register_vehicle(v, CertificateKind::ValidCertificate, &[1; 32])
            .unwrap();
        assert_eq!(s.escrow_key(CaId::from_u64(1), v).unwrap(), r.vehicle_key);
        let ghost = VehicleId::from_index(7);
        assert_eq!(
            s.escrow_key(CaId::from_u64(1), ghost).unwrap_err(),
            PkiError::NotRegistered(ghost)
        );
        assert_eq!(
            s.escrow_key(CaId::from_u64(5), v).unwrap_err(),
            PkiError::UnauthorizedCa(CaId::from_u64(5))
        );
    }

    #[test]
    fn locate() {
        let map = two_regions();
        assert_eq!(map.locate(10.0, 10.0).unwrap().id, CaId::from_u64(1));
        assert_eq!(map.locate(1500.0, 10.0).unwrap().id, CaId::from_u64(2));
        assert!(matches!(map.locate(-1.0, 5.0), Err(PkiError::OutOfCoverage { .. })));
        assert!(matches!(map.locate(500.0, 1000.5), Err(PkiError::OutOfCoverage { .. })));
        // shared edge goes to the lowest index
        assert_eq!(map.locate(1000.0, 500.0).unwrap().id, CaId::from_u64(1));
        // outer boundary is still covered
        assert_eq!(map.locate(2000.0, 1000.0).unwrap().id, CaId::from_u64(2));
    }

    #[test]
    fn region_map_validation() {
        let overlap = RegionMap::new(vec![
            region(1, Rect::new(0.0, 0.0, 100.0, 100.0)),
            region(2, Rect::new(50.0, 50.0, 150.0, 150.0)),
        ]);
        assert_eq!(
            overlap.unwrap_err(),
            PkiError::Overlap {
                first: CaId::from_u64(1),
                second: CaId::from_u64(2)
            }
        );
        assert!(matches!(
            Region::generate(CaId::from_u64(1), Rect::new(0.0, 0.0, 0.0, 10.0), &[0; 32], &[1; 32]),
            Err(PkiError::DegenerateRegion(_))
        ));
        let dup = RegionMap::new(vec![
            region(1, Rect::new(0.0, 0.0, 100.0, 100.0)),
            region(1, Rect::new(100.0, 0.0, 200.0, 100.0)),
        ]);
        assert!(matches!(dup, Err(PkiError::DuplicateRegion(_))));
    }

    #[test]
    fn roster_export() {
        let mut s = store();
        s.register_vehicle(
            VehicleId::from_index(2),
            CertificateKind::AdversaryCertificate,
            &[2; 32],
        )
        .unwrap();
        s.register_vehicle(VehicleId::from_index(1), CertificateKind::ValidCertificate, &[1; 32])
            .unwrap();
        assert_eq!(
            s.roster_csv(),
            "vehicle_id_hex,certificate_kind,home_ca_id_hex\n\
             00000000000000000000000000000001,VC,0000000000000000\n\
             00000000000000000000000000000002,AC,0000000000000000\n"
        );
    }

    #[derive(Debug, Clone)]
    enum Action {
        Register(u8, bool),
        Flag(u8),
        Issue(u8),
    }

    fn action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (0u8..8, any::<bool>()).prop_map(|(v, ok)| Action::Register(v, ok)),
            (0u8..8).prop_map(Action::Flag),
            (0u8..8).prop_map(Action::Issue),
        ]
    }

    proptest! {
        // No interleaving of registrations, flags and issuance lets an AC
        // holder obtain a group key, and revocation is monotone.
        #[test]
        fn certificate_gate_holds(actions in proptest::collection::vec(action(), 0..40)) {
            let map = two_regions();
            let mut s = store();
            let mut flagged = BTreeSet::new();
            for a in actions {
                match a {
                    Action::Register(v, ok) => {
                        let kind = if ok { CertificateKind::ValidCertificate } else { CertificateKind::AdversaryCertificate };
                        if s.register_vehicle(VehicleId::from_index(v as u64), kind, &[v; 32]).is_ok() && !ok {
                            flagged.insert(v);
                        }
                    }
                    Action::Flag(v) => {
                        if s.flag_adversary(VehicleId::from_index(v as u64)).is_ok() {
                            flagged.insert(v);
                        }
                    }
                    Action::Issue(v) => {
                        let id = VehicleId::from_index(v as u64);
                        for region in map.regions() {
                            let got = s.issue_group_key(region, id);
                            if flagged.contains(&v) {
                                prop_assert!(got.is_err());
                            }
                            if let Ok(key) = got {
                                prop_assert_eq!(s.registration(id).unwrap().certificate, CertificateKind::ValidCertificate);
                                prop_assert_eq!(key, region.group_key.clone());
                            }
                        }
                    }
                }
            }
            // escrow consistency
            for r in s.registrations() {
                prop_assert_eq!(s.escrow_key(CaId::from_u64(1), r.vehicle).unwrap(), r.vehicle_key.clone());
            }
        }
    }
}

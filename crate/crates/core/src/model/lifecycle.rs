//! Operations that derive a new model from an existing one.

use std::collections::BTreeSet;

use crate::model::{AssetType, Id, ModelError, Policy, TrustDomainModel};

/// Clones a policy into `target_domain_id`, established by `new_establisher_role_id`.
///
/// The clone keeps the rules and tag, starts unpublished, and is linked to the
/// original by equivalence. Returns the new model and the clone's id.
pub fn clone_policy(
    model: &TrustDomainModel,
    policy_id: &str,
    target_domain_id: &str,
    new_establisher_role_id: &str,
) -> Result<(TrustDomainModel, Id), ModelError> {
    let original = model
        .policies
        .get(policy_id)
        .ok_or_else(|| ModelError::UnknownPolicy(policy_id.to_string()))?;
    if !model.domains.contains_key(target_domain_id) {
        return Err(ModelError::UnknownDomain(target_domain_id.to_string()));
    }
    if !model.roles.contains_key(new_establisher_role_id) {
        return Err(ModelError::UnknownRole(new_establisher_role_id.to_string()));
    }

    let clone_id = (1..)
        .map(|n| format!("{policy_id}.clone{n}"))
        .find(|id| !model.contains(id))
        .expect("unbounded candidate sequence");

    let mut next = model.clone();
    next.policies.insert(
        clone_id.clone(),
        Policy {
            id: clone_id.clone(),
            scope_domain_ids: BTreeSet::from([target_domain_id.to_string()]),
            rules: original.rules.clone(),
            published_by: BTreeSet::new(),
            published_to: None,
            equivalent_to: BTreeSet::from([policy_id.to_string()]),
            is_delivery_policy: original.is_delivery_policy,
            tag: original.tag.clone(),
        },
    );
    next.policies
        .get_mut(policy_id)
        .expect("checked above")
        .equivalent_to
        .insert(clone_id.clone());
    next.roles
        .get_mut(new_establisher_role_id)
        .expect("checked above")
        .established_policy_ids
        .insert(clone_id.clone());
    Ok((next, clone_id))
}

fn require_management(model: &TrustDomainModel, agent_id: &str) -> Result<(), ModelError> {
    if model.is_management_agent(agent_id) {
        Ok(())
    } else {
        Err(ModelError::NotManagementAgent(agent_id.to_string()))
    }
}

pub fn provision_resource(
    model: &TrustDomainModel,
    mgmt_agent_id: &str,
    resource_asset_id: &str,
    initial_state: &str,
) -> Result<TrustDomainModel, ModelError> {
    require_management(model, mgmt_agent_id)?;
    let asset = model
        .assets
        .get(resource_asset_id)
        .filter(|a| a.asset_type == AssetType::Resource)
        .ok_or_else(|| ModelError::NotAResource(resource_asset_id.to_string()))?;
    if asset.provisioned_by.is_some() {
        return Err(ModelError::AlreadyProvisioned(
            resource_asset_id.to_string(),
        ));
    }
    let mut next = model.clone();
    let asset = next
        .assets
        .get_mut(resource_asset_id)
        .expect("checked above");
    asset.provisioned_by = Some(mgmt_agent_id.to_string());
    asset.state = Some(initial_state.to_string());
    Ok(next)
}

/// Only the agent that provisioned a resource may deprovision it.
pub fn deprovision_resource(
    model: &TrustDomainModel,
    mgmt_agent_id: &str,
    resource_asset_id: &str,
) -> Result<TrustDomainModel, ModelError> {
    require_management(model, mgmt_agent_id)?;
    let provisioner = model
        .assets
        .get(resource_asset_id)
        .and_then(|a| a.provisioned_by.as_ref())
        .ok_or_else(|| ModelError::NotProvisioned(resource_asset_id.to_string()))?;
    if provisioner != mgmt_agent_id {
        return Err(ModelError::NotProvisioner {
            agent: mgmt_agent_id.to_string(),
            resource: resource_asset_id.to_string(),
        });
    }
    let mut next = model.clone();
    let asset = next
        .assets
        .get_mut(resource_asset_id)
        .expect("checked above");
    asset.provisioned_by = None;
    asset.state = None;
    Ok(next)
}

/// Compares a provisioned resource's state label with `expected_state`.
///
/// Pure; [`crate::decisions::Runtime::validate_state`] records the outcome as an audit event.
pub fn validate_state(
    model: &TrustDomainModel,
    mgmt_agent_id: &str,
    resource_asset_id: &str,
    expected_state: &str,
) -> Result<bool, ModelError> {
    require_management(model, mgmt_agent_id)?;
    let asset = model
        .assets
        .get(resource_asset_id)
        .filter(|a| a.provisioned_by.is_some())
        .ok_or_else(|| ModelError::NotProvisioned(resource_asset_id.to_string()))?;
    Ok(asset.state.as_deref() == Some(expected_state))
}

pub fn domain_members(
    model: &TrustDomainModel,
    domain_id: &str,
) -> Result<BTreeSet<Id>, ModelError> {
    if !model.domains.contains_key(domain_id) {
        return Err(ModelError::UnknownDomain(domain_id.to_string()));
    }
    Ok(model
        .entities
        .values()
        .filter(|e| e.memberships.contains(domain_id))
        .map(|e| e.id.clone())
        .collect())
}

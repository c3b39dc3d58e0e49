/**
 * View-model types mirroring the platform API response schemas exactly
 * (docs/api_schema.json).  The dashboard never computes scores: every
 * displayed number is the API value verbatim, except the delta column,
 * which is the difference between two API responses.
 */

export type ScenarioClass =
  | 'loss_of_control_or_view'
  | 'denial'
  | 'tampering'
  | 'spoofing'
  | 'repudiation'
  | 'information_disclosure'
  | 'elevation_of_privileges';

export type ImpactCategory = 'low' | 'medium' | 'high';

export interface ScenarioEntry {
  s: ScenarioClass;
  p: number;
  m: ImpactCategory;
  c: number;
  net: number;
}

export interface Assessment {
  org_id: string;
  assessed_at: string;
  entries: ScenarioEntry[];
  n: number;
  aggregate: number;
  hypothetical: boolean;
}

export interface Finding {
  finding_id: string;
  org_id: string;
  category: string;
  severity: number;
  evidence: Record<string, unknown>;
  open: boolean;
  rule: string;
  department: 'it' | 'medical_device';
  remediation: string;
}

export interface FindingsResponse {
  org_id: string;
  findings: Finding[];
}

export type EaLayer = 'organizational' | 'application' | 'technology';

export interface EaNode {
  id: string;
  layer: EaLayer;
  label: string;
  criticality: 'low' | 'medium' | 'high';
  sensitive: boolean;
  safety: boolean;
}

export interface EaView {
  org_id: string;
  nodes: EaNode[];
  edges: [string, string][];
  bindings: { tech_id: string; kind: string; matcher: string }[];
  orphans: string[];
  finding_processes: Record<string, string[]>;
  finding_technology: Record<string, string[]>;
}

export interface ApiErrorBody {
  status: number;
  code: string;
  message: string;
  correlation_id: string;
}

export type WhatIfOverride =
  | { action: 'close_finding'; finding_id: string }
  | {
      action: 'open_finding';
      category: string;
      evidence: Record<string, unknown>;
      severity?: number;
    }
  | { action: 'force_c'; scenario: ScenarioClass; value: number };

export interface OrgsResponse {
  orgs: string[];
}

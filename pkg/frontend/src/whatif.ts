/**
 * What-if panel: the user drafts overrides (close findings, pin a
 * countermeasure score), submits them to the what-if endpoint, and sees the
 * hypothetical assessment side-by-side with the baseline plus a delta
 * column.  Drafts live only in the panel; the server persists nothing, and
 * the flow touches no endpoint other than POST what-if.
 */

import { ApiCallError, ApiClient } from './api.js';
import { SCENARIO_LABELS } from './overview.js';
import { deltaText, errorBanner, esc, num } from './render.js';
import type {
  ApiErrorBody,
  Assessment,
  Finding,
  ScenarioClass,
  ScenarioEntry,
  WhatIfOverride,
} from './types.js';

export interface WhatIfDraft {
  closeFindings: Set<string>;
  pinnedC: Map<ScenarioClass, number>;
}

export function emptyDraft(): WhatIfDraft {
  return { closeFindings: new Set(), pinnedC: new Map() };
}

export function buildOverrides(draft: WhatIfDraft): WhatIfOverride[] {
  const overrides: WhatIfOverride[] = [];
  for (const findingId of [...draft.closeFindings].sort()) {
    overrides.push({ action: 'close_finding', finding_id: findingId });
  }
  for (const [scenario, value] of [...draft.pinnedC.entries()].sort()) {
    overrides.push({ action: 'force_c', scenario, value });
  }
  return overrides;
}

export interface CompareRow {
  scenario: ScenarioClass;
  baseline: ScenarioEntry | null;
  hypothetical: ScenarioEntry | null;
  delta: number;
}

export interface Comparison {
  rows: CompareRow[];
  aggregateDelta: number;
}

export function compareAssessments(
  baseline: Assessment,
  hypothetical: Assessment,
): Comparison {
  const order: ScenarioClass[] = [];
  const baseBy = new Map(baseline.entries.map((e) => [e.s, e]));
  const hypoBy = new Map(hypothetical.entries.map((e) => [e.s, e]));
  for (const entry of baseline.entries) order.push(entry.s);
  for (const entry of hypothetical.entries) {
    if (!baseBy.has(entry.s)) order.push(entry.s);
  }
  const rows = order.map((scenario) => {
    const base = baseBy.get(scenario) ?? null;
    const hypo = hypoBy.get(scenario) ?? null;
    return {
      scenario,
      baseline: base,
      hypothetical: hypo,
      delta: (hypo?.net ?? 0) - (base?.net ?? 0),
    };
  });
  return {
    rows,
    aggregateDelta: hypothetical.aggregate - baseline.aggregate,
  };
}

/** Baseline changed server-side since it was loaded: prompt a refresh. */
export function isStale(current: Assessment, loadedBaseline: Assessment): boolean {
  return (
    current.assessed_at !== loadedBaseline.assessed_at ||
    current.aggregate !== loadedBaseline.aggregate
  );
}

export class WhatIfFlow {
  constructor(private readonly client: ApiClient) {}

  /** Submit a draft; only the what-if endpoint is ever called. */
  async submit(org: string, draft: WhatIfDraft): Promise<Assessment> {
    return this.client.postWhatIf(org, buildOverrides(draft));
  }
}

function entryCells(entry: ScenarioEntry | null): string {
  if (entry === null) {
    return `<td class="num">&mdash;</td><td class="num">&mdash;</td>`;
  }
  return (
    `<td class="num c">${num(entry.c)}</td>` +
    `<td class="num net">${num(entry.net)}</td>`
  );
}

export function renderComparison(
  baseline: Assessment,
  hypothetical: Assessment,
): string {
  const comparison = compareAssessments(baseline, hypothetical);
  const rows = comparison.rows
    .map(
      (row) =>
        `<tr data-scenario="${esc(row.scenario)}">` +
        `<td class="scenario">${esc(
          SCENARIO_LABELS[row.scenario] ?? row.scenario,
        )}</td>` +
        entryCells(row.baseline) +
        entryCells(row.hypothetical) +
        `<td class="num delta">${deltaText(row.delta)}</td>` +
        `</tr>`,
    )
    .join('');
  return (
    `<table class="what-if-table">` +
    `<thead><tr><th rowspan="2">Scenario</th>` +
    `<th colspan="2">baseline</th><th colspan="2">hypothetical</th>` +
    `<th rowspan="2">net &Delta;</th></tr>` +
    `<tr><th>c</th><th>net</th><th>c</th><th>net</th></tr></thead>` +
    `<tbody>${rows}</tbody>` +
    `<tfoot><tr><td>aggregate</td>` +
    `<td colspan="2" class="num aggregate-base">${num(baseline.aggregate)}</td>` +
    `<td colspan="2" class="num aggregate-hypo">${num(
      hypothetical.aggregate,
    )}</td>` +
    `<td class="num delta aggregate-delta">${deltaText(
      comparison.aggregateDelta,
    )}</td></tr></tfoot>` +
    `</table>`
  );
}

export function renderDraftChips(
  draft: WhatIfDraft,
  findings: Finding[],
): string {
  const byId = new Map(findings.map((f) => [f.finding_id, f]));
  const chips: string[] = [];
  for (const findingId of [...draft.closeFindings].sort()) {
    const finding = byId.get(findingId);
    const label = finding ? finding.category : findingId;
    chips.push(
      `<span class="chip close" data-finding-id="${esc(findingId)}">` +
      `close ${esc(label)} &times;</span>`,
    );
  }
  for (const [scenario, value] of [...draft.pinnedC.entries()].sort()) {
    chips.push(
      `<span class="chip pin" data-scenario="${esc(scenario)}">` +
      `c(${esc(scenario)}) = ${value} &times;</span>`,
    );
  }
  return `<div class="draft-chips">${chips.join('')}</div>`;
}

export function renderWhatIf(
  baseline: Assessment | null,
  hypothetical: Assessment | null,
  draft: WhatIfDraft,
  findings: Finding[],
  error?: ApiErrorBody | null,
  stale = false,
): string {
  if (baseline === null) {
    return `<div class="empty-state">Load a baseline assessment first.</div>`;
  }
  const parts: string[] = ['<section class="what-if">'];
  if (stale) {
    parts.push(
      `<div class="banner stale">The baseline assessment changed on the ` +
      `server. <button data-action="refresh-baseline">Refresh</button></div>`,
    );
  }
  if (error) {
    parts.push(`<div class="inline-error">${errorBanner(error)}</div>`);
  }
  parts.push(renderDraftChips(draft, findings));
  if (hypothetical) {
    parts.push(renderComparison(baseline, hypothetical));
  } else {
    parts.push(
      `<div class="hint">Toggle findings or pin a countermeasure score, ` +
      `then submit to compare.</div>`,
    );
  }
  parts.push('</section>');
  return parts.join('');
}

export { ApiCallError };

/**
 * Risk overview: scenario table (s, p, m, c, net), aggregate gauge 0-100,
 * and open-finding counts by category.  Every score cell carries the API
 * value verbatim.
 */

import { deltaText, errorBanner, esc, num } from './render.js';
import type { ApiErrorBody, Assessment, Finding } from './types.js';

export const SCENARIO_LABELS: Record<string, string> = {
  loss_of_control_or_view: 'Loss of control or view',
  denial: 'Denial',
  tampering: 'Tampering',
  spoofing: 'Spoofing',
  repudiation: 'Repudiation',
  information_disclosure: 'Information disclosure',
  elevation_of_privileges: 'Elevation of privileges',
};

export function scenarioTable(assessment: Assessment): string {
  const rows = assessment.entries
    .map(
      (entry) =>
        `<tr data-scenario="${esc(entry.s)}">` +
        `<td class="scenario">${esc(SCENARIO_LABELS[entry.s] ?? entry.s)}</td>` +
        `<td class="num p">${num(entry.p)}</td>` +
        `<td class="impact m">${esc(entry.m)}</td>` +
        `<td class="num c">${num(entry.c)}</td>` +
        `<td class="num net">${num(entry.net)}</td>` +
        `</tr>`,
    )
    .join('');
  return (
    `<table class="scenario-table">` +
    `<thead><tr><th>Scenario</th><th>p</th><th>impact</th><th>c</th>` +
    `<th>net</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function aggregateGauge(assessment: Assessment): string {
  const width = Math.max(0, Math.min(100, assessment.aggregate));
  return (
    `<div class="gauge" role="meter" aria-valuemin="0" aria-valuemax="100">` +
    `<div class="gauge-fill" style="width:${width}%"></div>` +
    `<span class="gauge-value">${num(assessment.aggregate)}</span>` +
    `</div>`
  );
}

export function findingCounts(findings: Finding[]): string {
  const counts = new Map<string, number>();
  for (const finding of findings) {
    if (!finding.open) continue;
    counts.set(finding.category, (counts.get(finding.category) ?? 0) + 1);
  }
  const items = [...counts.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(
      ([category, count]) =>
        `<li data-category="${esc(category)}">` +
        `<span class="count">${count}</span> ${esc(category)}</li>`,
    )
    .join('');
  return `<ul class="finding-counts">${items}</ul>`;
}

export function renderOverview(
  assessment: Assessment | null,
  findings: Finding[],
  error?: ApiErrorBody | null,
): string {
  if (error) {
    return errorBanner(error);
  }
  if (assessment === null) {
    return (
      `<div class="empty-state">No assessment yet for this organization. ` +
      `Run <code>hcti assess</code> to produce one.</div>`
    );
  }
  const freshness = assessment.hypothetical
    ? '<span class="tag hypothetical">hypothetical</span>'
    : '';
  return (
    `<section class="overview" data-org="${esc(assessment.org_id)}">` +
    `<header><h2>${esc(assessment.org_id)}</h2>${freshness}` +
    `<span class="assessed-at">as of ${esc(assessment.assessed_at)}</span>` +
    `</header>` +
    aggregateGauge(assessment) +
    scenarioTable(assessment) +
    `<h3>Open findings</h3>` +
    findingCounts(findings) +
    `</section>`
  );
}

export { deltaText };

/**
 * Enterprise-architecture map: the three layers stacked top-to-bottom
 * (organizational, application, technology), open findings badged on their
 * technology nodes, and the selected finding's affected processes
 * highlighted exactly as the API reports them.
 */

import { esc } from './render.js';
import type { EaLayer, EaNode, EaView, Finding } from './types.js';

export const LAYER_ORDER: EaLayer[] = [
  'organizational',
  'application',
  'technology',
];

function badgeCounts(ea: EaView, findings: Finding[]): Map<string, number> {
  const counts = new Map<string, number>();
  for (const finding of findings) {
    if (!finding.open) continue;
    for (const tech of ea.finding_technology[finding.finding_id] ?? []) {
      counts.set(tech, (counts.get(tech) ?? 0) + 1);
    }
  }
  return counts;
}

function nodeBox(
  node: EaNode,
  badge: number,
  highlighted: boolean,
): string {
  const classes = ['ea-node', `crit-${node.criticality}`];
  if (highlighted) classes.push('highlight');
  const flags =
    (node.sensitive ? '<span class="flag sensitive">sensitive</span>' : '') +
    (node.safety ? '<span class="flag safety">safety</span>' : '');
  const badgeHtml = badge > 0 ? `<span class="badge">${badge}</span>` : '';
  return (
    `<div class="${classes.join(' ')}" data-node-id="${esc(node.id)}">` +
    `${esc(node.label)}${flags}${badgeHtml}</div>`
  );
}

export function renderEaMap(
  ea: EaView | null,
  findings: Finding[],
  selectedFindingId?: string | null,
): string {
  if (ea === null) {
    return (
      `<div class="empty-state call-to-action">No enterprise-architecture ` +
      `model for this organization. Add an <code>.ea</code> model file to ` +
      `map findings onto business processes.</div>`
    );
  }
  const badges = badgeCounts(ea, findings);
  const highlighted = new Set(
    selectedFindingId ? ea.finding_processes[selectedFindingId] ?? [] : [],
  );
  const sections = LAYER_ORDER.map((layer) => {
    const nodes = ea.nodes
      .filter((node) => node.layer === layer)
      .sort((a, b) => a.id.localeCompare(b.id))
      .map((node) =>
        nodeBox(
          node,
          layer === 'technology' ? badges.get(node.id) ?? 0 : 0,
          layer === 'organizational' && highlighted.has(node.id),
        ),
      )
      .join('');
    return (
      `<section class="layer layer-${layer}" data-layer="${layer}">` +
      `<h3>${layer}</h3><div class="nodes">${nodes}</div></section>`
    );
  }).join('');
  return `<div class="ea-map" data-org="${esc(ea.org_id)}">${sections}</div>`;
}

/** Finding list used as the selector next to the map. */
export function renderFindingSelector(
  findings: Finding[],
  selectedFindingId?: string | null,
): string {
  const items = findings
    .filter((finding) => finding.open)
    .map((finding) => {
      const selected = finding.finding_id === selectedFindingId;
      return (
        `<li class="finding${selected ? ' selected' : ''}" ` +
        `data-finding-id="${esc(finding.finding_id)}">` +
        `<span class="category">${esc(finding.category)}</span> ` +
        `<span class="severity">${finding.severity}</span> ` +
        `<span class="department">${esc(finding.department)}</span>` +
        `</li>`
      );
    })
    .join('');
  return `<ul class="finding-selector">${items}</ul>`;
}

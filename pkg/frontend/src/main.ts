/**
 * Browser bootstrap: org selector, three panels (overview, EA map,
 * what-if), polling refresh.  All state beyond the what-if draft lives on
 * the server; a reload reproduces any view from API state alone.
 */

import { ApiCallError, ApiClient, browserHttp } from './api.js';
import { renderEaMap, renderFindingSelector } from './eamap.js';
import { renderOverview } from './overview.js';
import { emptyDraft, isStale, renderWhatIf, WhatIfFlow } from './whatif.js';
import type { ApiErrorBody, Assessment, EaView, Finding } from './types.js';

declare global {
  interface Window {
    HCTI_POLL_MS?: number;
    HCTI_TOKEN?: string;
  }
}

const POLL_MS = window.HCTI_POLL_MS ?? 30_000;
const client = new ApiClient(browserHttp(window.HCTI_TOKEN ?? ''));
const flow = new WhatIfFlow(client);

interface PanelState {
  org: string | null;
  assessment: Assessment | null;
  assessmentError: ApiErrorBody | null;
  findings: Finding[];
  eaView: EaView | null;
  selectedFinding: string | null;
  draft: ReturnType<typeof emptyDraft>;
  hypothetical: Assessment | null;
  whatIfError: ApiErrorBody | null;
  stale: boolean;
}

const state: PanelState = {
  org: null,
  assessment: null,
  assessmentError: null,
  findings: [],
  eaView: null,
  selectedFinding: null,
  draft: emptyDraft(),
  hypothetical: null,
  whatIfError: null,
  stale: false,
};

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function loadOrg(org: string): Promise<void> {
  state.org = org;
  state.assessmentError = null;
  state.whatIfError = null;
  try {
    state.assessment = await client.getAssessment(org);
  } catch (error) {
    state.assessment = null;
    if (error instanceof ApiCallError && error.error.code !== 'no_assessment') {
      state.assessmentError = error.error;
    }
  }
  try {
    state.findings = (await client.getFindings(org)).findings;
  } catch {
    state.findings = [];
  }
  try {
    state.eaView = await client.getEaView(org);
  } catch {
    state.eaView = null;
  }
  state.selectedFinding = null;
  state.draft = emptyDraft();
  state.hypothetical = null;
  state.stale = false;
  render();
}

async function pollRefresh(): Promise<void> {
  if (!state.org) return;
  try {
    const fresh = await client.getAssessment(state.org);
    if (state.assessment && isStale(fresh, state.assessment)) {
      state.stale = true;
    } else {
      state.assessment = fresh;
    }
    render();
  } catch {
    /* keep the current view; next poll retries */
  }
}

function render(): void {
  el('overview').innerHTML = renderOverview(
    state.assessment,
    state.findings,
    state.assessmentError,
  );
  el('ea-map').innerHTML =
    renderFindingSelector(state.findings, state.selectedFinding) +
    renderEaMap(state.eaView, state.findings, state.selectedFinding);
  el('what-if').innerHTML = renderWhatIf(
    state.assessment,
    state.hypothetical,
    state.draft,
    state.findings,
    state.whatIfError,
    state.stale,
  );
}

async function submitWhatIf(): Promise<void> {
  if (!state.org) return;
  state.whatIfError = null;
  try {
    state.hypothetical = await flow.submit(state.org, state.draft);
  } catch (error) {
    state.hypothetical = null;
    if (error instanceof ApiCallError) state.whatIfError = error.error;
  }
  render();
}

function wireEvents(): void {
  el('ea-map').addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest('[data-finding-id]');
    if (!target) return;
    const id = target.getAttribute('data-finding-id');
    state.selectedFinding = state.selectedFinding === id ? null : id;
    render();
  });

  el('what-if').addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const chip = target.closest('.chip.close');
    if (chip) {
      state.draft.closeFindings.delete(chip.getAttribute('data-finding-id')!);
      render();
      return;
    }
    if (target.getAttribute('data-action') === 'refresh-baseline' && state.org) {
      void loadOrg(state.org);
    }
  });

  el('finding-toggle').addEventListener('click', () => {
    if (!state.selectedFinding) return;
    const draft = state.draft.closeFindings;
    if (draft.has(state.selectedFinding)) draft.delete(state.selectedFinding);
    else draft.add(state.selectedFinding);
    render();
  });

  el('submit-what-if').addEventListener('click', () => void submitWhatIf());

  el('org-select').addEventListener('change', (event) => {
    void loadOrg((event.target as HTMLSelectElement).value);
  });
}

async function boot(): Promise<void> {
  wireEvents();
  const select = el('org-select') as HTMLSelectElement;
  try {
    const { orgs } = await client.getOrgs();
    select.innerHTML = orgs
      .map((org) => `<option value="${org}">${org}</option>`)
      .join('');
    if (orgs.length) await loadOrg(orgs[0]!);
  } catch {
    el('overview').innerHTML =
      '<div class="empty-state">Platform API unreachable.</div>';
  }
  window.setInterval(() => void pollRefresh(), POLL_MS);
}

void boot();

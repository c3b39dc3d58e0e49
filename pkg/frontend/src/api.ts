/**
 * Thin API client over an injectable HTTP function, so tests can assert at
 * the network level which endpoints a flow touches (the what-if flow must
 * never hit a persistence endpoint).
 */

import type {
  ApiErrorBody,
  Assessment,
  EaView,
  FindingsResponse,
  OrgsResponse,
  WhatIfOverride,
} from './types.js';

export interface HttpResponse {
  status: number;
  body: unknown;
}

export type HttpFn = (
  method: string,
  url: string,
  body?: unknown,
) => Promise<HttpResponse>;

export class ApiCallError extends Error {
  constructor(public readonly error: ApiErrorBody) {
    super(`${error.code}: ${error.message}`);
  }
}

function isErrorBody(body: unknown): body is ApiErrorBody {
  return (
    typeof body === 'object' &&
    body !== null &&
    'code' in body &&
    'correlation_id' in body
  );
}

export class ApiClient {
  constructor(
    private readonly http: HttpFn,
    private readonly base: string = '',
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.http(method, this.base + path, body);
    if (response.status >= 200 && response.status < 300) {
      return response.body as T;
    }
    if (isErrorBody(response.body)) {
      throw new ApiCallError(response.body);
    }
    throw new ApiCallError({
      status: response.status,
      code: 'unexpected_response',
      message: `unexpected status ${response.status}`,
      correlation_id: 'n/a',
    });
  }

  getOrgs(): Promise<OrgsResponse> {
    return this.call('GET', '/api/orgs');
  }

  getAssessment(org: string): Promise<Assessment> {
    return this.call('GET', `/api/orgs/${encodeURIComponent(org)}/assessment`);
  }

  getFindings(org: string): Promise<FindingsResponse> {
    return this.call('GET', `/api/orgs/${encodeURIComponent(org)}/findings`);
  }

  getEaView(org: string): Promise<EaView> {
    return this.call('GET', `/api/orgs/${encodeURIComponent(org)}/ea`);
  }

  postWhatIf(org: string, overrides: WhatIfOverride[]): Promise<Assessment> {
    return this.call('POST', `/api/orgs/${encodeURIComponent(org)}/what-if`, {
      overrides,
    });
  }
}

/** Browser HTTP function over fetch; a bearer token is attached when set. */
export function browserHttp(token = ''): HttpFn {
  return async (method, url, body) => {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers['Content-Type'] = 'application/json';
    if (token) headers['Authorization'] = `Bearer ${token}`;
    const response = await fetch(url, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let parsed: unknown = null;
    const text = await response.text();
    try {
      parsed = text ? JSON.parse(text) : null;
    } catch {
      parsed = { raw: text };
    }
    return { status: response.status, body: parsed };
  };
}

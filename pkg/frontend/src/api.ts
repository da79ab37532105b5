// REST client for the metaforge API. All state lives server-side; the client
// holds only the base URL and the session token.

export interface ApiConfig {
    baseUrl: string;
    token: string;
    fetchFn?: typeof fetch;
}

export interface ErrorBody {
    error: string;
    message: string;
    path?: string;
    report?: ValidationReport;
}

export interface ValidationError {
    path: string;
    code: string;
    message: string;
}

export interface ValidationReport {
    valid: boolean;
    errors: ValidationError[];
}

export interface Suggestion {
    valueKey: string;
    display: string;
    score: number;
    supportCount: number;
}

export interface OntologyTerm {
    iri: string;
    label: string;
    source: string;
    synonyms: string[];
}

export interface TermSearchResponse {
    terms: OntologyTerm[];
    degraded: boolean;
}

export interface ResourceRecord {
    id: string;
    resourceType: string;
    parentFolder: string;
    owner: { kind: string; id?: string };
    acl: Array<{ principal: { kind: string; id?: string }; level: string }>;
    name: string;
    description: string | null;
    version: number;
    createdAt: string;
    updatedAt: string;
    payload: unknown;
}

export class ApiError extends Error {
    constructor(
        public status: number,
        public code: string,
        message: string,
        public body: ErrorBody | null = null,
    ) {
        super(message);
    }
}

export class ApiClient {
    private fetchFn: typeof fetch;

    constructor(private config: ApiConfig) {
        this.fetchFn = config.fetchFn ?? fetch.bind(globalThis);
    }

    private async request<T>(method: string, path: string, body?: unknown,
                             headers: Record<string, string> = {}): Promise<T> {
        const response = await this.fetchFn(`${this.config.baseUrl}/api/v1${path}`, {
            method,
            headers: {
                Authorization: `apikey token=${this.config.token}`,
                ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
                ...headers,
            },
            body: body !== undefined ? JSON.stringify(body) : undefined,
        });
        const text = await response.text();
        let parsed: unknown = null;
        try {
            parsed = text ? JSON.parse(text) : null;
        } catch {
            parsed = null;
        }
        if (!response.ok) {
            const errorBody = (parsed ?? {}) as ErrorBody;
            throw new ApiError(response.status, errorBody.error ?? "HTTP_ERROR",
                errorBody.message ?? `HTTP ${response.status}`, errorBody);
        }
        return parsed as T;
    }

    me(): Promise<{ userId: string; homeFolder: string; rootFolder: string }> {
        return this.request("GET", "/me");
    }

    createTemplate(document: unknown, parentFolder?: string): Promise<ResourceRecord> {
        return this.request("POST", "/templates", { document, parentFolder });
    }

    createInstance(document: unknown, opts: { parentFolder?: string; force?: boolean } = {}):
        Promise<ResourceRecord> {
        return this.request("POST", "/instances", { document, ...opts });
    }

    updateInstance(id: string, version: number, document: unknown,
                   force = false): Promise<ResourceRecord> {
        return this.request("PUT", `/resources/${id}`, { document, force },
            { "If-Match": String(version) });
    }

    getResource(id: string): Promise<ResourceRecord> {
        return this.request("GET", `/resources/${id}`);
    }

    deleteResource(id: string): Promise<void> {
        return this.request("DELETE", `/resources/${id}`);
    }

    listChildren(folderId: string): Promise<ResourceRecord[]> {
        return this.request("GET", `/folders/${folderId}/children`);
    }

    search(params: { q?: string; type?: string; annotatedWith?: string; folder?: string }):
        Promise<ResourceRecord[]> {
        const query = new URLSearchParams();
        for (const [key, value] of Object.entries(params)) {
            if (value) query.set(key, value);
        }
        return this.request("GET", `/search?${query.toString()}`);
    }

    getSchema(templateId: string): Promise<Record<string, unknown>> {
        return this.request("GET", `/templates/${templateId}/schema`);
    }

    validateInstance(templateId: string, document: unknown): Promise<ValidationReport> {
        return this.request("POST", `/templates/${templateId}/validate`, document);
    }

    recommend(body: {
        templateId: string;
        targetPath: string;
        context: Array<{ path: string; value: string }>;
        k: number;
    }): Promise<Suggestion[]> {
        return this.request("POST", "/recommend", body);
    }

    terminologySearch(q: string, source?: string, limit = 8): Promise<TermSearchResponse> {
        const query = new URLSearchParams({ q, limit: String(limit) });
        if (source) query.set("source", source);
        return this.request("GET", `/terminology/search?${query.toString()}`);
    }

    createProvisionalTerm(label: string,
                          mappings: Array<{ relation: string; targetIri: string }>,
                          force = false): Promise<{ id: string; iri: string; label: string }> {
        return this.request("POST", "/terminology/provisional-terms",
            { label, mappings, force });
    }

    submitInstance(instanceId: string, target: string, force = false):
        Promise<{ httpStatus: number; remoteId: string | null }> {
        return this.request("POST", `/instances/${instanceId}/submit`, { target, force });
    }

    setPermissions(resourceId: string,
                   acl: Array<{ principal: { kind: string; id?: string }; level: string }>):
        Promise<ResourceRecord> {
        return this.request("PUT", `/resources/${resourceId}/permissions`, { acl });
    }

    createGroup(name: string): Promise<{ id: string; members: string[] }> {
        return this.request("POST", "/groups", { name });
    }

    updateMembers(groupId: string, add: string[], remove: string[] = []):
        Promise<{ id: string; members: string[] }> {
        return this.request("PUT", `/groups/${groupId}/members`, { add, remove });
    }
}

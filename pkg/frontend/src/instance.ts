// FormModel -> JSON-LD instance document serialization, save round-trip
// handling, and attaching server validation errors back onto widgets.
//
// The document layout matches the server's canonical form (rdfs prefix
// first, then the context entries sorted by name; values in form order), so
// everything this module produces parses server-side.

import { ApiClient, ApiError, ResourceRecord, ValidationError } from "./api.js";
import { FieldNode, FieldValue, FormModel, FormNode, widgets } from "./formModel.js";

const RDFS = "http://www.w3.org/2000/01/rdf-schema#";

export interface TemplatePropertyMap {
    [fieldName: string]: string;
}

function valueDoc(field: FieldNode, value: FieldValue): unknown {
    if (value.kind === "term") {
        return { "@id": value.iri, "rdfs:label": value.label };
    }
    if (field.fieldType === "number") {
        return { "@value": value.text, "@type": "xsd:decimal" };
    }
    if (field.fieldType === "date") {
        return { "@value": value.text, "@type": "xsd:date" };
    }
    return { "@value": value.text };
}

function filledValues(field: FieldNode): FieldValue[] {
    return field.values.filter((v) =>
        v.kind === "term" ? v.iri !== "" : v.text !== "");
}

function nodesToValues(nodes: FormNode[], out: Record<string, unknown>): void {
    for (const node of nodes) {
        if (node.nodeType === "field") {
            const filled = filledValues(node);
            if (filled.length === 0) continue;
            const docs = filled.map((v) => valueDoc(node, v));
            const multi = node.cardinality.max === null || node.cardinality.max > 1;
            out[node.name] = multi ? docs : docs[0];
        } else {
            const inner: Record<string, unknown> = {};
            nodesToValues(node.children, inner);
            if (Object.keys(inner).length > 0) {
                out[node.name] = inner;
            }
        }
    }
}

export function buildInstanceDocument(
    model: FormModel,
    instanceId: string,
    properties: TemplatePropertyMap,
): Record<string, unknown> {
    const context: Record<string, string> = { rdfs: RDFS };
    for (const name of Object.keys(properties).sort()) {
        context[name] = properties[name];
    }
    const doc: Record<string, unknown> = {
        "@context": context,
        "@id": instanceId,
        "@type": `urn:metaforge:template:${model.templateId}`,
    };
    nodesToValues(model.nodes, doc);
    return doc;
}

// Extracts field-name -> propertyIri pairs from a template document tree.
export function propertyMapOf(templateDoc: unknown): TemplatePropertyMap {
    const out: TemplatePropertyMap = {};
    const walk = (children: Array<Record<string, unknown>>) => {
        for (const child of children) {
            const name = child.name as string | undefined;
            const iri = child.propertyIri as string | undefined;
            if (name && iri && !(name in out)) out[name] = iri;
            if (Array.isArray(child.children)) {
                walk(child.children as Array<Record<string, unknown>>);
            }
        }
    };
    const doc = templateDoc as Record<string, unknown>;
    if (Array.isArray(doc.children)) walk(doc.children as Array<Record<string, unknown>>);
    return out;
}

function widgetPathOf(errorPath: string): string {
    // "/sample/0/tissue" -> "sample/tissue": strip the pointer slash and any
    // array indices so the path matches the index-free widget paths
    return errorPath
        .split("/")
        .filter((segment) => segment !== "" && !/^\d+$/.test(segment))
        .join("/");
}

export function clearErrors(model: FormModel): void {
    model.formErrors = [];
    const walk = (nodes: FormNode[]) => {
        for (const node of nodes) {
            node.errors = [];
            if (node.nodeType === "group") walk(node.children);
        }
    };
    walk(model.nodes);
}

export function attachErrors(model: FormModel, errors: ValidationError[]): void {
    clearErrors(model);
    const byPath = new Map<string, FormNode>();
    const walk = (nodes: FormNode[]) => {
        for (const node of nodes) {
            byPath.set(node.path, node);
            if (node.nodeType === "group") walk(node.children);
        }
    };
    walk(model.nodes);
    for (const error of errors) {
        const target = byPath.get(widgetPathOf(error.path));
        if (target) {
            target.errors.push(`${error.code}: ${error.message}`);
        } else {
            model.formErrors.push(`${error.code}: ${error.message}`);
        }
    }
}

export type SaveOutcome =
    | { status: "saved"; record: ResourceRecord }
    | { status: "invalid" }                      // errors now attached to widgets
    | { status: "conflict" }                     // stale version: reload-and-merge
    | { status: "error"; message: string };

// Serializes and saves the form. Widget values survive every failure mode so
// nothing the author typed is lost.
export async function saveInstance(
    api: ApiClient,
    model: FormModel,
    instanceId: string,
    properties: TemplatePropertyMap,
): Promise<SaveOutcome> {
    const doc = buildInstanceDocument(model, instanceId, properties);
    try {
        const record = model.resourceId === undefined
            ? await api.createInstance(doc)
            : await api.updateInstance(model.resourceId, model.version ?? 0, doc);
        clearErrors(model);
        model.resourceId = record.id;
        model.version = record.version;
        return { status: "saved", record };
    } catch (error) {
        if (error instanceof ApiError) {
            if (error.status === 409) {
                return { status: "conflict" };
            }
            if (error.body?.report) {
                attachErrors(model, error.body.report.errors);
                return { status: "invalid" };
            }
            return { status: "error", message: error.message };
        }
        throw error;
    }
}

// Loads a stored instance document back into the widgets for editing.
export function populateModel(model: FormModel, doc: Record<string, unknown>): void {
    const fill = (nodes: FormNode[], values: Record<string, unknown>) => {
        for (const node of nodes) {
            const raw = values[node.name];
            if (raw === undefined) continue;
            if (node.nodeType === "group") {
                if (typeof raw === "object" && raw !== null && !Array.isArray(raw)) {
                    fill(node.children, raw as Record<string, unknown>);
                }
                continue;
            }
            const entries = Array.isArray(raw) ? raw : [raw];
            node.values = entries.map((entry) => {
                const valueObject = entry as Record<string, unknown>;
                if (valueObject["@id"] !== undefined) {
                    return {
                        kind: "term" as const,
                        iri: String(valueObject["@id"]),
                        label: String(valueObject["rdfs:label"] ?? ""),
                    };
                }
                return { kind: "literal" as const, text: String(valueObject["@value"] ?? "") };
            });
        }
    };
    const values: Record<string, unknown> = {};
    for (const [key, value] of Object.entries(doc)) {
        if (!key.startsWith("@")) values[key] = value;
    }
    fill(model.nodes, values);
}

// Sanity helper used by tests and the save button state.
export function missingRequired(model: FormModel): string[] {
    return widgets(model)
        .filter((w) => w.cardinality.min >= 1 &&
            w.values.filter((v) => (v.kind === "term" ? v.iri : v.text) !== "").length
                < w.cardinality.min)
        .map((w) => w.path);
}

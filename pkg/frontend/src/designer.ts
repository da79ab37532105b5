// Template designer operations: add/remove/reorder fields, constraint and
// annotation editing, element references. All pure document transforms; the
// server stays the validation authority on save.

export interface FieldDraft {
    name: string;
    fieldType: "text" | "paragraph" | "number" | "date" | "term";
    required?: boolean;
    cardinality?: { min: number; max: number | null };
    propertyIri?: string;
    constraints?: Record<string, unknown>;
    description?: string;
}

export interface TemplateDraft {
    id: string;
    kind: "template" | "element";
    name: string;
    description?: string;
    annotations?: Array<{ propertyIri: string; termIri: string; termLabel: string }>;
    children: Array<Record<string, unknown>>;
    version: number;
}

export class DesignerError extends Error {}

function childName(child: Record<string, unknown>): string | undefined {
    return child.name as string | undefined;
}

function assertNameFree(draft: TemplateDraft, name: string): void {
    if (!name) {
        throw new DesignerError("fields need a non-empty name");
    }
    if (name.includes("/") || name.startsWith("@")) {
        throw new DesignerError(`illegal field name ${JSON.stringify(name)}`);
    }
    if (draft.children.some((c) => childName(c) === name)) {
        throw new DesignerError(`a sibling named ${JSON.stringify(name)} already exists`);
    }
}

export function newTemplateDraft(id: string, name: string): TemplateDraft {
    return { id, kind: "template", name, children: [], version: 0 };
}

export function addField(draft: TemplateDraft, field: FieldDraft, at?: number): TemplateDraft {
    assertNameFree(draft, field.name);
    if (field.fieldType === "term" &&
        !(field.constraints && Array.isArray((field.constraints as any).sources) &&
          (field.constraints as any).sources.length > 0)) {
        throw new DesignerError("a term field needs at least one value constraint source");
    }
    const entry: Record<string, unknown> = { name: field.name, fieldType: field.fieldType };
    if (field.required !== undefined) entry.required = field.required;
    if (field.cardinality) entry.cardinality = field.cardinality;
    if (field.propertyIri) entry.propertyIri = field.propertyIri;
    if (field.constraints && Object.keys(field.constraints).length > 0) {
        entry.constraints = field.constraints;
    }
    if (field.description) entry.description = field.description;
    const children = [...draft.children];
    children.splice(at ?? children.length, 0, entry);
    return { ...draft, children };
}

export function removeChild(draft: TemplateDraft, name: string): TemplateDraft {
    const children = draft.children.filter((c) => childName(c) !== name);
    if (children.length === draft.children.length) {
        throw new DesignerError(`no child named ${JSON.stringify(name)}`);
    }
    return { ...draft, children };
}

export function reorderChild(draft: TemplateDraft, from: number, to: number): TemplateDraft {
    if (from < 0 || from >= draft.children.length ||
        to < 0 || to >= draft.children.length) {
        throw new DesignerError("reorder positions are out of range");
    }
    const children = [...draft.children];
    const [moved] = children.splice(from, 1);
    children.splice(to, 0, moved);
    return { ...draft, children };
}

export function setFieldConstraints(draft: TemplateDraft, name: string,
                                    constraints: Record<string, unknown>): TemplateDraft {
    const children = draft.children.map((c) =>
        childName(c) === name ? { ...c, constraints } : c);
    if (!children.some((c) => childName(c) === name)) {
        throw new DesignerError(`no child named ${JSON.stringify(name)}`);
    }
    return { ...draft, children };
}

export function annotate(draft: TemplateDraft,
                         annotation: { propertyIri: string; termIri: string; termLabel: string }):
    TemplateDraft {
    const annotations = [...(draft.annotations ?? []), annotation];
    return { ...draft, annotations };
}

export function insertReference(draft: TemplateDraft, refId: string,
                                cardinality?: { min: number; max: number | null },
                                at?: number): TemplateDraft {
    const entry: Record<string, unknown> = { ref: refId };
    if (cardinality) entry.cardinality = cardinality;
    const children = [...draft.children];
    children.splice(at ?? children.length, 0, entry);
    return { ...draft, children };
}

export function toDocument(draft: TemplateDraft): Record<string, unknown> {
    const doc: Record<string, unknown> = { id: draft.id, kind: draft.kind, name: draft.name };
    if (draft.description) doc.description = draft.description;
    if (draft.annotations && draft.annotations.length > 0) doc.annotations = draft.annotations;
    doc.children = draft.children;
    doc.version = draft.version;
    return doc;
}

// Form model generation: a template document (plus, when the template uses
// references, its compiled schema) becomes an ordered widget tree the editor
// renders. Widget kind is a pure function of the field type.

export type WidgetKind = "textInput" | "textArea" | "numberInput" | "dateInput" | "termPicker";

export interface Cardinality {
    min: number;
    max: number | null; // null = unbounded
}

export type FieldValue =
    | { kind: "literal"; text: string }
    | { kind: "term"; iri: string; label: string };

export interface FieldNode {
    nodeType: "field";
    widgetKind: WidgetKind;
    path: string;           // slash-joined, index-free
    name: string;
    label: string;
    fieldType: string;
    required: boolean;
    cardinality: Cardinality;
    constraints: Record<string, unknown>;
    values: FieldValue[];
    errors: string[];
}

export interface GroupNode {
    nodeType: "group";
    path: string;
    name: string;
    label: string;
    cardinality: Cardinality;
    collapsed: boolean;
    children: FormNode[];
    errors: string[];
}

export type FormNode = FieldNode | GroupNode;

export interface FormModel {
    templateId: string;
    templateName: string;
    nodes: FormNode[];
    formErrors: string[];
    resourceId?: string;   // set when editing a stored instance
    version?: number;
}

const WIDGET_FOR_TYPE: Record<string, WidgetKind> = {
    text: "textInput",
    paragraph: "textArea",
    number: "numberInput",
    date: "dateInput",
    term: "termPicker",
};

interface TemplateChildDoc {
    name?: string;
    fieldType?: string;
    kind?: string;
    ref?: string;
    required?: boolean;
    cardinality?: { min?: number; max?: number | null };
    constraints?: Record<string, unknown>;
    children?: TemplateChildDoc[];
}

export interface TemplateDoc {
    id: string;
    name: string;
    children?: TemplateChildDoc[];
}

function cardinalityOf(child: TemplateChildDoc, fallbackRequired: boolean): Cardinality {
    if (child.cardinality) {
        return { min: child.cardinality.min ?? 0, max: child.cardinality.max ?? null };
    }
    return fallbackRequired ? { min: 1, max: 1 } : { min: 0, max: 1 };
}

function fieldNode(child: TemplateChildDoc, prefix: string): FieldNode {
    const name = child.name ?? "";
    const widgetKind = WIDGET_FOR_TYPE[child.fieldType ?? "text"] ?? "textInput";
    const required = child.required ?? false;
    return {
        nodeType: "field",
        widgetKind,
        path: prefix ? `${prefix}/${name}` : name,
        name,
        label: name,
        fieldType: child.fieldType ?? "text",
        required,
        cardinality: cardinalityOf(child, required),
        constraints: child.constraints ?? {},
        values: [],
        errors: [],
    };
}

function groupNode(child: TemplateChildDoc, prefix: string): GroupNode {
    const name = child.name ?? "";
    const path = prefix ? `${prefix}/${name}` : name;
    return {
        nodeType: "group",
        path,
        name,
        label: name,
        cardinality: cardinalityOf(child, false),
        collapsed: true, // elements start collapsed in the designer screenshotish way
        children: buildNodes(child.children ?? [], path, undefined),
        errors: [],
    };
}

// A reference child only carries an id; the compiled schema (where references
// are already inlined) tells us the shape. Paragraph and text are not
// distinguishable there, so references to paragraph fields degrade to a
// plain text input.
function nodeFromSchema(name: string, subschema: Record<string, unknown>,
                        prefix: string, cardinality: Cardinality): FormNode {
    let shape = subschema;
    if (shape.type === "array") {
        shape = (shape.items ?? {}) as Record<string, unknown>;
    }
    const properties = (shape.properties ?? {}) as Record<string, Record<string, unknown>>;
    const path = prefix ? `${prefix}/${name}` : name;
    if (properties["@id"]) {
        return {
            nodeType: "field", widgetKind: "termPicker", path, name, label: name,
            fieldType: "term", required: cardinality.min >= 1, cardinality,
            constraints: {}, values: [], errors: [],
        };
    }
    if (properties["@value"]) {
        const value = properties["@value"];
        let widgetKind: WidgetKind = "textInput";
        let fieldType = "text";
        if (value.anyOf) {
            widgetKind = "numberInput";
            fieldType = "number";
        } else if (value.format === "date") {
            widgetKind = "dateInput";
            fieldType = "date";
        }
        return {
            nodeType: "field", widgetKind, path, name, label: name, fieldType,
            required: cardinality.min >= 1, cardinality,
            constraints: {}, values: [], errors: [],
        };
    }
    // nested element
    const required = (shape.required ?? []) as string[];
    const children: FormNode[] = Object.entries(properties)
        .filter(([key]) => !key.startsWith("@"))
        .map(([key, sub]) => {
            const childCardinality: Cardinality = sub.type === "array"
                ? { min: (sub.minItems as number) ?? 0, max: (sub.maxItems as number) ?? null }
                : { min: required.includes(key) ? 1 : 0, max: 1 };
            return nodeFromSchema(key, sub, path, childCardinality);
        });
    return {
        nodeType: "group", path, name, label: name, cardinality,
        collapsed: true, children, errors: [],
    };
}

function buildNodes(children: TemplateChildDoc[], prefix: string,
                    schema?: Record<string, unknown>): FormNode[] {
    const hasRefs = children.some((c) => c.ref !== undefined);
    if (!hasRefs || !schema) {
        return children
            .filter((c) => c.ref === undefined)
            .map((c) => (c.fieldType !== undefined ? fieldNode(c, prefix) : groupNode(c, prefix)));
    }
    // With references present, the compiled schema (where they are already
    // inlined, in document order) drives the node order; inline children
    // still come from the richer template doc.
    const inlineByName = new Map<string, TemplateChildDoc>();
    for (const child of children) {
        if (child.ref === undefined && child.name) inlineByName.set(child.name, child);
    }
    const schemaProperties = (schema.properties ?? {}) as Record<string, Record<string, unknown>>;
    const required = (schema.required ?? []) as string[];
    const nodes: FormNode[] = [];
    for (const [name, subschema] of Object.entries(schemaProperties)) {
        if (name.startsWith("@")) continue;
        const inline = inlineByName.get(name);
        if (inline !== undefined) {
            nodes.push(inline.fieldType !== undefined
                ? fieldNode(inline, prefix) : groupNode(inline, prefix));
            continue;
        }
        const cardinality: Cardinality = subschema.type === "array"
            ? { min: (subschema.minItems as number) ?? 0,
                max: (subschema.maxItems as number) ?? null }
            : { min: required.includes(name) ? 1 : 0, max: 1 };
        nodes.push(nodeFromSchema(name, subschema, prefix, cardinality));
    }
    return nodes;
}

export function buildFormModel(template: TemplateDoc,
                               schema?: Record<string, unknown>): FormModel {
    return {
        templateId: template.id,
        templateName: template.name,
        nodes: buildNodes(template.children ?? [], "", schema),
        formErrors: [],
    };
}

export function widgets(model: FormModel): FieldNode[] {
    const out: FieldNode[] = [];
    const walk = (nodes: FormNode[]) => {
        for (const node of nodes) {
            if (node.nodeType === "field") out.push(node);
            else walk(node.children);
        }
    };
    walk(model.nodes);
    return out;
}

export function findNode(model: FormModel, path: string): FormNode | undefined {
    let found: FormNode | undefined;
    const walk = (nodes: FormNode[]) => {
        for (const node of nodes) {
            if (node.path === path) found = node;
            else if (node.nodeType === "group") walk(node.children);
        }
    };
    walk(model.nodes);
    return found;
}

export function canAddValue(field: FieldNode): boolean {
    return field.cardinality.max === null || field.values.length < field.cardinality.max;
}

export function canRemoveValue(field: FieldNode): boolean {
    return field.values.length > field.cardinality.min;
}

export function addValue(field: FieldNode, value: FieldValue): boolean {
    if (!canAddValue(field)) return false;
    field.values.push(value);
    return true;
}

export function removeValue(field: FieldNode, index: number): boolean {
    if (!canRemoveValue(field) || index < 0 || index >= field.values.length) return false;
    field.values.splice(index, 1);
    return true;
}

export function setValue(field: FieldNode, index: number, value: FieldValue): void {
    field.values[index] = value;
}

export function toggleGroup(group: GroupNode): void {
    group.collapsed = !group.collapsed;
}

struct Pair {
    int a;
    int b;
};

void struct_swap(struct Pair *p) {
    int t = p->a;
    p->a = p->b;
    p->b = t;
}

void use_swap(struct Pair *q) {
    int old = q->a;
    struct_swap(q);
    /*@ assert q->b == old; */
}

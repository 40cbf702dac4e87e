struct Inner {
    int x;
    int y;
};

struct Outer {
    struct Inner in;
    int tag;
};

void struct_nested(struct Outer *o) {
    o->in.x = o->in.y + 1;
    o->tag = 3;
}

void check_nested(struct Outer *o) {
    struct_nested(o);
    /*@ assert o->in.x == o->in.y + 1 && o->tag == 3; */
}

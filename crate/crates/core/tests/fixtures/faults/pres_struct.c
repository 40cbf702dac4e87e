struct Counter {
    int count;
    int limit;
};

/*@ requires 0 <= c->limit <= 4 && c->count == 0; */
void struct_inc(struct Counter *c) {
    /*@
      loop invariant c->limit == \at(c->limit, Pre);
      loop invariant 0 <= c->count <= c->limit;
      loop invariant c->count == 0;
    */
    while (c->count < c->limit) {
        c->count = c->count + 1;
    }
    /*@ assert c->count == c->limit; */
}
